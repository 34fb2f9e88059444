//! Counting multiplicative sublattices and subrings of `Z^n` through p-adic
//! volumes of domains defined by valuation constraints.

pub mod padic;
pub mod lattice;
pub mod domains;
pub mod bound;
pub mod lemmas;
pub mod zeta;
pub mod cli;

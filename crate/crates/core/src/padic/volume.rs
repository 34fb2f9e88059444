//! Exact Haar volumes of valuation constraint sets by digit-wise search.
//!
//! Satisfaction of `v_p(f(x)) >= c` depends only on `x mod p^c`, so the
//! volume of a system is `#{solutions mod p^C} / p^(C * vars)`. The count is
//! found by depth-first search over p-adic digits: level `j` fixes digit `j`
//! of every still-relevant variable, one variable at a time. A constraint is
//! tested as soon as all its variables carry `j + 1` digits; it is rejected
//! when `f` is already nonzero modulo `p^min(c, j+1)` and accepted for good
//! once `j + 1 >= c`. Variables left in no pending constraint stop branching
//! and contribute `p^(remaining digits)` solutions each.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use super::{ConstraintSystem, ExactVolume, PadicError, PrimeContext};

/// Default node budget of one volume computation.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

const FLUSH_EVERY: u64 = 4096;

type Factors = Vec<(usize, u32)>;

/// Residue arithmetic modulo powers of a fixed prime.
trait Arith: Sync {
    type E: Clone + Send + Sync;

    fn from_big(&self, x: &BigUint) -> Self::E;
    fn zero(&self) -> Self::E;
    /// `r + digit * p^level`.
    fn lift(&self, r: &Self::E, digit: u64, level: u32) -> Self::E;
    /// Whether `sum coeff * prod r^e` vanishes modulo `p^prec`.
    fn vanishes(&self, terms: &[(Self::E, Factors)], residues: &[Self::E], prec: u32) -> bool;
}

struct WordArith {
    pows: Vec<u64>,
}

impl WordArith {
    #[inline]
    fn mulmod(a: u64, b: u64, m: u64) -> u64 {
        if m <= u32::MAX as u64 {
            (a % m) * (b % m) % m
        } else {
            ((a as u128 * b as u128) % m as u128) as u64
        }
    }
}

impl Arith for WordArith {
    type E = u64;

    fn from_big(&self, x: &BigUint) -> u64 {
        x.to_u64().expect("coefficient reduced below p^C")
    }

    fn zero(&self) -> u64 {
        0
    }

    #[inline]
    fn lift(&self, r: &u64, digit: u64, level: u32) -> u64 {
        r + digit * self.pows[level as usize]
    }

    #[inline]
    fn vanishes(&self, terms: &[(u64, Factors)], residues: &[u64], prec: u32) -> bool {
        let m = self.pows[prec as usize];
        let mut acc: u64 = 0;
        for (c, factors) in terms {
            let mut t = *c % m;
            for &(v, e) in factors {
                let r = residues[v] % m;
                for _ in 0..e {
                    t = Self::mulmod(t, r, m);
                }
            }
            acc = ((acc as u128 + t as u128) % m as u128) as u64;
        }
        acc == 0
    }
}

struct BigArith {
    pows: Vec<BigUint>,
}

impl Arith for BigArith {
    type E = BigUint;

    fn from_big(&self, x: &BigUint) -> BigUint {
        x.clone()
    }

    fn zero(&self) -> BigUint {
        BigUint::zero()
    }

    fn lift(&self, r: &BigUint, digit: u64, level: u32) -> BigUint {
        r + &self.pows[level as usize] * digit
    }

    fn vanishes(&self, terms: &[(BigUint, Factors)], residues: &[BigUint], prec: u32) -> bool {
        let m = &self.pows[prec as usize];
        let mut acc = BigUint::zero();
        for (c, factors) in terms {
            let mut t = c % m;
            for &(v, e) in factors {
                t = t * residues[v].modpow(&BigUint::from(e), m) % m;
            }
            acc = (acc + t) % m;
        }
        acc.is_zero()
    }
}

struct Compiled<E> {
    threshold: u32,
    terms: Vec<(E, Factors)>,
    vars: u64,
}

enum Prepared {
    /// Some constraint is a nonzero constant modulo its threshold.
    Empty,
    /// Every constraint holds identically.
    Full,
    Search {
        precision: u32,
        /// `(threshold, terms over variable indices)`
        constraints: Vec<(u32, Vec<(BigUint, Factors)>)>,
    },
}

fn prepare(sys: &ConstraintSystem, ctx: PrimeContext) -> Prepared {
    let precision = sys.stability_precision();
    let mut constraints = Vec::new();
    for c in sys.constraints() {
        if c.threshold == 0 {
            continue;
        }
        let modulus = BigInt::from(ctx.pow(c.threshold));
        let reduced = c.poly.reduce_mod(&modulus);
        if reduced.is_zero() {
            continue;
        }
        let mut terms = Vec::new();
        let mut constant_only = true;
        for (m, coeff) in reduced.terms() {
            let factors: Factors = m
                .factors()
                .iter()
                .map(|(v, e)| (sys.variable_index(v).expect("declared"), *e))
                .collect();
            constant_only &= factors.is_empty();
            terms.push((coeff.to_biguint().expect("reduced"), factors));
        }
        if constant_only {
            // A single nonzero residue.
            return Prepared::Empty;
        }
        constraints.push((c.threshold, terms));
    }
    if constraints.is_empty() {
        Prepared::Full
    } else {
        Prepared::Search {
            precision,
            constraints,
        }
    }
}

/// Branching order: variables of constraints with fewer variables first, so
/// constraints become testable early.
fn branching_order(nvars: usize, constraints: &[u64]) -> Vec<usize> {
    let mut by_size: Vec<&u64> = constraints.iter().collect();
    by_size.sort_by_key(|m| m.count_ones());
    let mut order = Vec::new();
    for mask in by_size {
        for v in 0..nvars {
            if mask & (1 << v) != 0 && !order.contains(&v) {
                order.push(v);
            }
        }
    }
    order
}

struct Tally {
    /// `counts[e]` leaves each standing for `p^e` solutions.
    counts: Vec<u128>,
    local_nodes: u64,
}

struct Engine<'a, A: Arith> {
    arith: &'a A,
    p: u64,
    precision: u32,
    order: Vec<usize>,
    constraints: Vec<Compiled<A::E>>,
    /// Per order position: constraints whose last variable sits there.
    triggers: Vec<u64>,
    budget: u64,
    nodes: &'a AtomicU64,
}

impl<'a, A: Arith> Engine<'a, A> {
    fn tick(&self, tally: &mut Tally) -> Result<(), PadicError> {
        tally.local_nodes += 1;
        if tally.local_nodes == FLUSH_EVERY {
            tally.local_nodes = 0;
            let seen = self.nodes.fetch_add(FLUSH_EVERY, Ordering::Relaxed) + FLUSH_EVERY;
            if seen > self.budget {
                return Err(PadicError::BudgetExceeded {
                    budget: self.budget,
                });
            }
        }
        Ok(())
    }

    fn flush(&self, tally: &mut Tally) -> Result<(), PadicError> {
        let seen = self.nodes.fetch_add(tally.local_nodes, Ordering::Relaxed) + tally.local_nodes;
        tally.local_nodes = 0;
        if seen > self.budget {
            return Err(PadicError::BudgetExceeded {
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn active_for(&self, pending: u64) -> u64 {
        let mut vars = 0u64;
        let mut rest = pending;
        while rest != 0 {
            let c = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            vars |= self.constraints[c].vars;
        }
        vars
    }

    /// Positions (in branching order) of active variables.
    fn positions(&self, active: u64) -> Vec<usize> {
        (0..self.order.len())
            .filter(|&i| active & (1 << self.order[i]) != 0)
            .collect()
    }

    /// Start of level `j`: drop variables that left every pending constraint,
    /// then branch on the rest.
    fn level(
        &self,
        j: u32,
        residues: &mut Vec<A::E>,
        pending: u64,
        active: u64,
        free_exp: u32,
        tally: &mut Tally,
    ) -> Result<(), PadicError> {
        let still = self.active_for(pending);
        let freed = (active & !still).count_ones();
        let free_exp = free_exp + freed * (self.precision - j);
        if pending == 0 {
            tally.counts[free_exp as usize] += 1;
            return Ok(());
        }
        debug_assert!(j < self.precision);
        let positions = self.positions(still);
        self.assign(j, 0, &positions, residues, pending, still, free_exp, tally)
    }

    /// Tries each digit of the variable at `positions[k]`, testing the
    /// constraints that become decidable there.
    #[inline]
    fn try_digit(
        &self,
        j: u32,
        pos: usize,
        digit: u64,
        base: &A::E,
        residues: &mut [A::E],
        pending: u64,
    ) -> Option<u64> {
        let v = self.order[pos];
        residues[v] = self.arith.lift(base, digit, j);
        let mut pending = pending;
        let mut due = self.triggers[pos] & pending;
        while due != 0 {
            let c = due.trailing_zeros() as usize;
            due &= due - 1;
            let con = &self.constraints[c];
            let prec = con.threshold.min(j + 1);
            if !self.arith.vanishes(&con.terms, residues, prec) {
                return None;
            }
            if con.threshold <= j + 1 {
                pending &= !(1 << c);
            }
        }
        Some(pending)
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &self,
        j: u32,
        k: usize,
        positions: &[usize],
        residues: &mut Vec<A::E>,
        pending: u64,
        active: u64,
        free_exp: u32,
        tally: &mut Tally,
    ) -> Result<(), PadicError> {
        if k == positions.len() {
            return self.level(j + 1, residues, pending, active, free_exp, tally);
        }
        let pos = positions[k];
        let v = self.order[pos];
        let base = residues[v].clone();
        for d in 0..self.p {
            self.tick(tally)?;
            if let Some(next) = self.try_digit(j, pos, d, &base, residues, pending) {
                self.assign(j, k + 1, positions, residues, next, active, free_exp, tally)?;
            }
        }
        residues[v] = base;
        Ok(())
    }

    /// Level 0, with the first digit split across the thread pool. The
    /// per-digit tallies are merged in digit order.
    fn run(&self, nvars: usize, free_exp: u32) -> Result<Vec<u128>, PadicError> {
        let slots = (self.precision as usize) * nvars + 1;
        let pending: u64 = if self.constraints.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.constraints.len()) - 1
        };
        let active = self.active_for(pending);
        let positions = self.positions(active);
        let first = positions[0];
        let zero = self.arith.zero();
        let partials: Vec<Result<Vec<u128>, PadicError>> = (0..self.p)
            .into_par_iter()
            .map(|d| {
                let mut tally = Tally {
                    counts: vec![0; slots],
                    local_nodes: 0,
                };
                let mut residues = vec![zero.clone(); nvars];
                self.tick(&mut tally)?;
                if let Some(next) = self.try_digit(0, first, d, &zero, &mut residues, pending) {
                    self.assign(0, 1, &positions, &mut residues, next, active, free_exp, &mut tally)?;
                }
                self.flush(&mut tally)?;
                Ok(tally.counts)
            })
            .collect();
        let mut total = vec![0u128; slots];
        for part in partials {
            for (t, c) in total.iter_mut().zip(part?) {
                *t += c;
            }
        }
        Ok(total)
    }
}

fn count_with<A: Arith>(
    arith: &A,
    ctx: PrimeContext,
    nvars: usize,
    precision: u32,
    constraints: Vec<(u32, Vec<(BigUint, Factors)>)>,
    budget: u64,
) -> Result<BigUint, PadicError> {
    assert!(constraints.len() <= 64, "at most 64 live constraints");
    assert!(nvars <= 64, "at most 64 variables");
    let compiled: Vec<Compiled<A::E>> = constraints
        .into_iter()
        .map(|(threshold, terms)| {
            let vars = terms
                .iter()
                .flat_map(|(_, f)| f.iter().map(|(v, _)| 1u64 << v))
                .fold(0, |a, b| a | b);
            Compiled {
                threshold,
                terms: terms
                    .into_iter()
                    .map(|(c, f)| (arith.from_big(&c), f))
                    .collect(),
                vars,
            }
        })
        .collect();
    let masks: Vec<u64> = compiled.iter().map(|c| c.vars).collect();
    let order = branching_order(nvars, &masks);
    let mut triggers = vec![0u64; order.len()];
    for (ci, c) in compiled.iter().enumerate() {
        let last = (0..order.len())
            .filter(|&i| c.vars & (1 << order[i]) != 0)
            .max()
            .expect("constraint has variables");
        triggers[last] |= 1 << ci;
    }
    let unconstrained = (nvars - order.len()) as u32;
    let nodes = AtomicU64::new(0);
    let engine = Engine {
        arith,
        p: ctx.p(),
        precision,
        order,
        constraints: compiled,
        triggers,
        budget,
        nodes: &nodes,
    };
    let counts = engine.run(nvars, unconstrained * precision)?;
    let mut total = BigUint::zero();
    for (e, c) in counts.iter().enumerate() {
        if *c != 0 {
            total += ctx.pow(e as u32) * BigUint::from(*c);
        }
    }
    Ok(total)
}

/// Exact volume of the solution set of `sys` in the unit box `Z_p^vars`.
///
/// Fails with [`PadicError::BudgetExceeded`] once the search visits more
/// than `budget` nodes; a partial count is never returned.
pub fn solution_volume(
    sys: &ConstraintSystem,
    ctx: PrimeContext,
    budget: u64,
) -> Result<ExactVolume, PadicError> {
    if budget == 0 {
        return Err(PadicError::ZeroBudget);
    }
    let nvars = sys.variables().len();
    match prepare(sys, ctx) {
        Prepared::Empty => Ok(ExactVolume::zero(ctx)),
        Prepared::Full => Ok(ExactVolume::one(ctx)),
        Prepared::Search {
            precision,
            constraints,
        } => {
            let count = match ctx.pow_u64(precision) {
                Some(m) if m < (1 << 62) => {
                    let arith = WordArith {
                        pows: (0..=precision).map(|e| ctx.p().pow(e)).collect(),
                    };
                    count_with(&arith, ctx, nvars, precision, constraints, budget)?
                }
                _ => {
                    let arith = BigArith {
                        pows: (0..=precision).map(|e| ctx.pow(e)).collect(),
                    };
                    count_with(&arith, ctx, nvars, precision, constraints, budget)?
                }
            };
            Ok(ExactVolume::new(count, precision * nvars as u32, ctx))
        }
    }
}

/// A system compiled for repeated evaluation at machine-word points.
pub struct CompiledSystem {
    /// `(p^threshold, terms)`
    constraints: Vec<(u64, Vec<CompiledTerm>)>,
    nvars: usize,
    always_false: bool,
    /// Points whose coordinates are all below this are evaluated exactly in
    /// 64 bits, with one reduction per constraint.
    exact_limit: u64,
}

/// `coeff * prod values[vars[i]]`, with repeated variables listed repeatedly.
#[derive(Clone, Copy)]
struct CompiledTerm {
    coeff: u64,
    vars: [u8; 8],
    degree: u8,
}

impl CompiledTerm {
    #[inline]
    fn exact(&self, values: &[u64]) -> u64 {
        let mut t = self.coeff;
        for &v in &self.vars[..self.degree as usize] {
            t *= values[v as usize];
        }
        t
    }
}

impl CompiledSystem {
    /// `None` when some `p^threshold` does not fit comfortably in a word.
    pub fn new(sys: &ConstraintSystem, ctx: PrimeContext) -> Option<Self> {
        let nvars = sys.variables().len();
        ctx.pow_u64(sys.stability_precision())
            .filter(|&m| m < (1 << 62))?;
        let mut out = CompiledSystem {
            constraints: Vec::new(),
            nvars,
            always_false: false,
            exact_limit: 0,
        };
        match prepare(sys, ctx) {
            Prepared::Empty => out.always_false = true,
            Prepared::Full => {}
            Prepared::Search { constraints, .. } => {
                for (t, terms) in constraints {
                    let m = ctx.pow_u64(t).expect("fits");
                    let mut compiled = Vec::new();
                    for (c, f) in terms {
                        let mut vars = [0u8; 8];
                        let mut degree = 0usize;
                        for (v, e) in f {
                            for _ in 0..e {
                                *vars.get_mut(degree)? = u8::try_from(v).ok()?;
                                degree += 1;
                            }
                        }
                        compiled.push(CompiledTerm {
                            coeff: c.to_u64().expect("reduced"),
                            vars,
                            degree: degree as u8,
                        });
                    }
                    out.constraints.push((m, compiled));
                }
            }
        }
        out.exact_limit = out.largest_exact_bound();
        Some(out)
    }

    /// Largest `b` such that every constraint sums below `2^63` on `[0, b)`.
    fn largest_exact_bound(&self) -> u64 {
        let fits = |b: u64| -> bool {
            self.constraints.iter().all(|(_, terms)| {
                let mut total: u128 = 0;
                for t in terms {
                    let mut x = t.coeff as u128;
                    for _ in 0..t.degree {
                        x = x.saturating_mul(b as u128);
                    }
                    total = total.saturating_add(x);
                }
                total < (1u128 << 63)
            })
        };
        let (mut lo, mut hi) = (0u64, 1u64 << 32);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Satisfaction at a point given by non-negative integer values.
    pub fn is_satisfied(&self, values: &[u64]) -> bool {
        assert_eq!(values.len(), self.nvars);
        if self.always_false {
            return false;
        }
        if values.iter().all(|&v| v < self.exact_limit) {
            return self
                .constraints
                .iter()
                .all(|(m, terms)| terms.iter().map(|t| t.exact(values)).sum::<u64>() % m == 0);
        }
        self.constraints.iter().all(|(m, terms)| {
            let m = *m;
            let mut acc: u64 = 0;
            for term in terms {
                let mut t = term.coeff;
                for &v in &term.vars[..term.degree as usize] {
                    t = WordArith::mulmod(t, values[v as usize] % m, m);
                }
                acc = ((acc as u128 + t as u128) % m as u128) as u64;
            }
            acc == 0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::IntPolynomial;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(p).unwrap()
    }

    fn single(poly: &str, t: u32) -> ConstraintSystem {
        let poly: IntPolynomial = poly.parse().unwrap();
        let vars: Vec<String> = poly.variables().into_iter().map(String::from).collect();
        ConstraintSystem::new(vars).unwrap().with_constraint(poly, t).unwrap()
    }

    #[test]
    fn documented_examples() {
        let v = solution_volume(&single("x", 1), ctx(3), DEFAULT_BUDGET).unwrap();
        assert_eq!(v.to_string(), "1/3^1");
        let v = solution_volume(&single("x^2 - x", 1), ctx(2), DEFAULT_BUDGET).unwrap();
        assert_eq!(v.to_string(), "1/2^0");
        let v = solution_volume(&single("x^2 - 3*x", 2), ctx(3), DEFAULT_BUDGET).unwrap();
        assert_eq!(v.to_string(), "1/3^1");
    }

    #[test]
    fn budget_is_enforced() {
        let sys = single("x*y - z", 6);
        let err = solution_volume(&sys, ctx(5), 1000).unwrap_err();
        assert_eq!(err, PadicError::BudgetExceeded { budget: 1000 });
        assert_eq!(solution_volume(&sys, ctx(5), 0).unwrap_err(), PadicError::ZeroBudget);
    }

    #[test]
    fn constants_and_free_variables() {
        let sys = ConstraintSystem::new(["x", "y"])
            .unwrap()
            .with_constraint(IntPolynomial::constant(9), 2)
            .unwrap();
        assert_eq!(solution_volume(&sys, ctx(3), 10).unwrap().to_string(), "1/3^0");
        let sys = ConstraintSystem::new(["x", "y"])
            .unwrap()
            .with_constraint(IntPolynomial::constant(3), 2)
            .unwrap();
        assert!(solution_volume(&sys, ctx(3), 10).unwrap().is_zero());
        // y never constrained
        let sys = ConstraintSystem::new(["x", "y"])
            .unwrap()
            .with_constraint(IntPolynomial::var("x"), 3)
            .unwrap();
        assert_eq!(solution_volume(&sys, ctx(2), 100).unwrap().to_string(), "1/2^3");
    }

    #[test]
    fn big_modulus_path_matches_word_path() {
        // v_2(x) >= 70 forces 70 digits; the word path cannot hold 2^70.
        let v = solution_volume(&single("x", 70), ctx(2), DEFAULT_BUDGET).unwrap();
        assert_eq!(v, ExactVolume::p_power(70, ctx(2)));
        let v = solution_volume(&single("x^2 - x", 70), ctx(2), DEFAULT_BUDGET).unwrap();
        assert_eq!(v, ExactVolume::p_power(69, ctx(2)));
    }

    #[test]
    fn compiled_system_agrees_with_direct_evaluation() {
        let sys = single("x*y - 3*z + 1", 2);
        let c = CompiledSystem::new(&sys, ctx(3)).unwrap();
        for x in 0..9u64 {
            for y in 0..9u64 {
                for z in 0..9u64 {
                    let big: Vec<BigInt> = [x, y, z].iter().map(|&v| BigInt::from(v)).collect();
                    assert_eq!(c.is_satisfied(&[x, y, z]), sys.is_satisfied(ctx(3), &big));
                }
            }
        }
        // past the exact range the reducing path takes over
        let big = [u64::MAX - 4, 1 << 40, 7];
        let exact: Vec<BigInt> = big.iter().map(|&v| BigInt::from(v)).collect();
        assert_eq!(c.is_satisfied(&big), sys.is_satisfied(ctx(3), &exact));
    }
}

//! Truncated local and global zeta functions, pole-order probes, log-power
//! fits of partial sums, and audits of the volume-bound theorems.

mod audit;
mod fit;
mod hp;

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domains::{local_coefficient, DomainError};
use crate::lattice::{t_count, LatticeError};
use crate::padic::{primes_up_to, PadicError, PrimeContext};

pub use audit::{
    bound_audit, convergence_probe, convergence_threshold, BoundAuditCase, BoundAuditReport, BoundGrid,
    ConvergenceReport, ConvergenceRow, ConvergenceSpec,
};
pub use fit::{asympt_fit, asympt_fit_points, fit_log_polynomial, FitResidual, FitResult};
pub use hp::{HpReal, PRECISION_BITS, PRINT_DIGITS};

#[derive(Debug, Error)]
pub enum ZetaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("need at least {needed} samples spanning two decades, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("least-squares system is singular")]
    Singular,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Truncation parameters of a zeta evaluation on the real axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaQuery {
    pub n: usize,
    /// Decimal string, so the value is exact at working precision.
    pub s: String,
    pub p_max: u64,
    pub k_max: u32,
}

impl ZetaQuery {
    pub fn new(n: usize, s: impl Into<String>, p_max: u64, k_max: u32) -> Self {
        ZetaQuery {
            n,
            s: s.into(),
            p_max,
            k_max,
        }
    }

    fn parsed_s(&self) -> Result<HpReal, ZetaError> {
        HpReal::parse(&self.s).ok_or_else(|| ZetaError::InvalidArgument(format!("bad real number {:?}", self.s)))
    }
}

/// Memoized coefficients `a_n(k; p) = t_n(p^k)`.
///
/// Dimensions up to 4 are assembled from domain volumes; larger ones are
/// counted directly.
#[derive(Debug)]
pub struct CoefficientTable {
    budget: u64,
    memo: Mutex<HashMap<(usize, u64, u32), BigUint>>,
}

impl CoefficientTable {
    pub fn new(budget: u64) -> Self {
        CoefficientTable {
            budget,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, n: usize, p: u64, k: u32) -> Result<BigUint, ZetaError> {
        if n == 0 {
            return Err(ZetaError::InvalidArgument("dimension must be positive".into()));
        }
        if k == 0 || n == 1 {
            return Ok(BigUint::from(1u32));
        }
        if let Some(v) = self.memo.lock().expect("memo lock").get(&(n, p, k)) {
            return Ok(v.clone());
        }
        let ctx = PrimeContext::new(p)?;
        let v = if n <= 4 {
            local_coefficient(n, k, ctx, self.budget)?.value
        } else {
            let q = ctx
                .pow_u64(k)
                .ok_or_else(|| ZetaError::InvalidArgument(format!("{p}^{k} overflows")))?;
            t_count(n, q, self.budget)?.value
        };
        self.memo.lock().expect("memo lock").insert((n, p, k), v.clone());
        Ok(v)
    }
}

fn check_query(q: &ZetaQuery) -> Result<(), ZetaError> {
    if q.n == 0 {
        return Err(ZetaError::InvalidArgument("dimension must be positive".into()));
    }
    if q.p_max < 2 {
        return Err(ZetaError::InvalidArgument("p_max must be at least 2".into()));
    }
    Ok(())
}

fn local_factor(n: usize, s: &HpReal, p: u64, k_max: u32, table: &CoefficientTable) -> Result<HpReal, ZetaError> {
    let step = HpReal::int_pow(p, &HpReal::zero().sub(s));
    let mut term = HpReal::one();
    let mut sum = HpReal::one();
    for k in 1..=k_max {
        term = term.mul(&step);
        let a = table.get(n, p, k)?;
        sum = sum.add(&HpReal::from_biguint(&a).mul(&term));
    }
    Ok(sum)
}

/// `1 + sum_(k <= k_max) a_n(k; p) p^(-ks)` at the single prime `p`
/// (`q.p_max` is ignored).
pub fn local_zeta(q: &ZetaQuery, p: u64, table: &CoefficientTable) -> Result<HpReal, ZetaError> {
    if q.n == 0 {
        return Err(ZetaError::InvalidArgument("dimension must be positive".into()));
    }
    PrimeContext::new(p)?;
    local_factor(q.n, &q.parsed_s()?, p, q.k_max, table)
}

/// Product of the local factors over `p <= p_max`, multiplied in
/// increasing order of `p` so the result does not depend on scheduling.
pub fn global_zeta(q: &ZetaQuery, table: &CoefficientTable) -> Result<HpReal, ZetaError> {
    check_query(q)?;
    let s = q.parsed_s()?;
    if s <= HpReal::one() {
        return Err(ZetaError::InvalidArgument(format!("global product needs s > 1, got {}", q.s)));
    }
    global_product(q.n, &s, q.p_max, q.k_max, table)
}

fn global_product(n: usize, s: &HpReal, p_max: u64, k_max: u32, table: &CoefficientTable) -> Result<HpReal, ZetaError> {
    let factors: Vec<Result<HpReal, ZetaError>> = primes_up_to(p_max)
        .into_par_iter()
        .map(|p| local_factor(n, s, p, k_max, table))
        .collect();
    let mut acc = HpReal::one();
    for f in factors {
        acc = acc.mul(&f?);
    }
    Ok(acc)
}

/// Order of the pole of the zeta function of `Z^n` at `s = 1`.
pub fn pole_order(n: usize) -> u32 {
    (n * (n + 1) / 2) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleRow {
    pub s: String,
    pub zeta: String,
    /// `(s-1)^(c-1) Z(s)` with `c` the pole order.
    pub below: String,
    /// `(s-1)^c Z(s)`.
    pub at: String,
    /// `(s-1)^(c+1) Z(s)`.
    pub above: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleProbe {
    pub n: usize,
    pub order: u32,
    pub p_max: u64,
    pub k_max: u32,
    pub rows: Vec<PoleRow>,
}

/// Evaluates the truncated product along `s_grid` and scales it by powers
/// of `s - 1` around the expected pole order.
pub fn pole_probe(
    n: usize,
    s_grid: &[String],
    p_max: u64,
    k_max: u32,
    table: &CoefficientTable,
) -> Result<PoleProbe, ZetaError> {
    let order = pole_order(n);
    let mut rows = Vec::with_capacity(s_grid.len());
    for s_text in s_grid {
        let q = ZetaQuery::new(n, s_text.clone(), p_max, k_max);
        let z = global_zeta(&q, table)?;
        let gap = q.parsed_s()?.sub(&HpReal::one());
        let below = gap.powi(order as usize - 1).mul(&z);
        let at = below.mul(&gap);
        let above = at.mul(&gap);
        rows.push(PoleRow {
            s: s_text.clone(),
            zeta: z.to_string(),
            below: below.to_string(),
            at: at.to_string(),
            above: above.to_string(),
        });
    }
    Ok(PoleProbe {
        n,
        order,
        p_max,
        k_max,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CoefficientTable {
        CoefficientTable::new(crate::padic::DEFAULT_BUDGET)
    }

    #[test]
    fn trivial_truncations() {
        let t = table();
        let q = ZetaQuery::new(3, "2", 2, 0);
        assert_eq!(local_zeta(&q, 5, &t).unwrap(), HpReal::one());
        let q = ZetaQuery::new(2, "2", 7, 1);
        // 1 + 3/49
        let expect = HpReal::from_u64(52).div(&HpReal::from_u64(49));
        assert_eq!(local_zeta(&q, 7, &t).unwrap().to_string(), expect.to_string());
        let single = global_zeta(&ZetaQuery::new(2, "2", 2, 3), &t).unwrap();
        assert_eq!(single, local_zeta(&ZetaQuery::new(2, "2", 2, 3), 2, &t).unwrap());
    }

    #[test]
    fn riemann_zeta_at_two() {
        let t = table();
        let z = global_zeta(&ZetaQuery::new(1, "2", 2000, 40), &t).unwrap().to_f64();
        let target = std::f64::consts::PI.powi(2) / 6.0;
        assert!(z < target && target - z < 1e-3, "{z}");
        // local factor against the closed form (1 - p^-s)^-1
        let l = local_zeta(&ZetaQuery::new(1, "3", 0, 60), 2, &t).unwrap().to_f64();
        assert!((l - 8.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_queries() {
        let t = table();
        assert!(global_zeta(&ZetaQuery::new(2, "1", 10, 2), &t).is_err());
        assert!(global_zeta(&ZetaQuery::new(2, "0.5", 10, 2), &t).is_err());
        assert!(global_zeta(&ZetaQuery::new(2, "two", 10, 2), &t).is_err());
        assert!(global_zeta(&ZetaQuery::new(2, "2", 1, 2), &t).is_err());
        assert!(local_zeta(&ZetaQuery::new(2, "2", 10, 2), 4, &t).is_err());
    }

    #[test]
    fn residue_of_riemann_zeta() {
        let t = table();
        let probe = pole_probe(1, &["1.5".into(), "1.2".into()], 3000, 60, &t).unwrap();
        assert_eq!(probe.order, 1);
        let at: f64 = probe.rows[1].at.parse().unwrap();
        assert!((at - 1.0).abs() < 0.15, "{at}");
    }

    #[test]
    fn coefficients_match_direct_counts() {
        let t = table();
        for p in [2u64, 3] {
            for k in 1..=2 {
                let direct = t_count(3, p.pow(k), crate::lattice::DEFAULT_CEILING).unwrap().value;
                assert_eq!(t.get(3, p, k).unwrap(), direct);
            }
        }
        assert_eq!(t.get(5, 2, 1).unwrap(), BigUint::from(15u32));
    }
}

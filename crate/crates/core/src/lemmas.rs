//! One-variable and two-variable valuation sets whose volumes bound the
//! domain volumes, with audits of their upper bounds over parameter grids.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bound::PowerBound;
use crate::padic::{
    solution_volume, valuation_i128, ConstraintSystem, ExactVolume, IntPolynomial, PadicError,
    PrimeContext, Valuation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LemmaId {
    /// `v(xy - z) >= k` in `x`.
    #[serde(rename = "xy-z")]
    LinearTarget,
    /// `v(x) + v(x - p^l) >= k`, bound `2 p^-ceil(k/2)`.
    #[serde(rename = "k/2")]
    ShiftedHalf,
    /// Same set, bound `2 p^-(k-l)`.
    #[serde(rename = "k-l")]
    ShiftedGap,
    /// `v(xy - z) >= k` in `(x, y)`.
    #[serde(rename = "k+1")]
    ProductPair,
    /// `v(x(y - z)) >= k` in `(x, y)`.
    #[serde(rename = "k+1-xyz")]
    ScaledShiftPair,
    /// `v(x(x - p^l) - z) >= k`, bound `2 p^-ceil(k/2)`.
    #[serde(rename = "zk2")]
    QuadraticHalf,
    /// Same set, bound `C p^-(k-l)` with the 2-adic exceptions.
    #[serde(rename = "k-l-z")]
    QuadraticGap,
}

impl LemmaId {
    pub const ALL: [LemmaId; 7] = [
        LemmaId::LinearTarget,
        LemmaId::ShiftedHalf,
        LemmaId::ShiftedGap,
        LemmaId::ProductPair,
        LemmaId::ScaledShiftPair,
        LemmaId::QuadraticHalf,
        LemmaId::QuadraticGap,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            LemmaId::LinearTarget => "xy-z",
            LemmaId::ShiftedHalf => "k/2",
            LemmaId::ShiftedGap => "k-l",
            LemmaId::ProductPair => "k+1",
            LemmaId::ScaledShiftPair => "k+1-xyz",
            LemmaId::QuadraticHalf => "zk2",
            LemmaId::QuadraticGap => "k-l-z",
        }
    }

    pub fn from_tag(s: &str) -> Option<LemmaId> {
        LemmaId::ALL.into_iter().find(|l| l.tag() == s)
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// Which bound or sub-case this is.
    pub case: String,
    pub bound: PowerBound,
    /// Unasserted checks are reported but never count as failures.
    pub asserted: bool,
    pub pass: bool,
}

impl BoundCheck {
    fn new(case: impl Into<String>, bound: PowerBound, asserted: bool, vol: &ExactVolume) -> Self {
        BoundCheck {
            case: case.into(),
            pass: bound.admits(vol),
            bound,
            asserted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCase {
    pub lemma: LemmaId,
    pub p: u64,
    pub k: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<u64>,
    pub volume: ExactVolume,
    pub checks: Vec<BoundCheck>,
}

impl LemmaCase {
    /// Every asserted bound holds.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass || !c.asserted)
    }
}

fn v(name: &str) -> IntPolynomial {
    IntPolynomial::var(name)
}

fn c(x: impl Into<BigInt>) -> IntPolynomial {
    IntPolynomial::constant(x)
}

fn volume_of(vars: &[&str], poly: IntPolynomial, k: u32, ctx: PrimeContext, budget: u64) -> Result<ExactVolume, PadicError> {
    let sys = ConstraintSystem::new(vars.iter().copied())?.with_constraint(poly, k)?;
    solution_volume(&sys, ctx, budget)
}

fn p_pow(ctx: PrimeContext, e: u32) -> BigInt {
    BigInt::from(ctx.pow(e))
}

fn ceil_half(k: u32) -> i64 {
    k.div_ceil(2) as i64
}

/// `{x : v(xy - z) >= k}`, bounded by `p^-(k - v(y))`, or 1 once `v(y) >= k`.
pub fn vol_linear(ctx: PrimeContext, k: u32, y: u64, z: u64, budget: u64) -> Result<LemmaCase, PadicError> {
    let poly = &(&v("x") * &c(y)) - &c(z);
    let volume = volume_of(&["x"], poly, k, ctx, budget)?;
    let vy = valuation_i128(y as i128, ctx.p());
    let exponent = match vy {
        Valuation::Finite(e) if e < k => -((k - e) as i64),
        _ => 0,
    };
    let check = BoundCheck::new("p^-(k-v(y))", PowerBound::integral(1u32, ctx, exponent), true, &volume);
    Ok(LemmaCase {
        lemma: LemmaId::LinearTarget,
        p: ctx.p(),
        k,
        l: None,
        y: Some(y),
        z: Some(z),
        volume,
        checks: vec![check],
    })
}

/// `{x : v(x) + v(x - p^l) >= k}` against both of its bounds.
pub fn vol_shifted_quadratic(ctx: PrimeContext, k: u32, l: u32, budget: u64) -> Result<(LemmaCase, LemmaCase), PadicError> {
    let poly = &v("x") * &(&v("x") - &c(p_pow(ctx, l)));
    let volume = volume_of(&["x"], poly, k, ctx, budget)?;
    let half = BoundCheck::new("2p^-ceil(k/2)", PowerBound::integral(2u32, ctx, -ceil_half(k)), true, &volume);
    let gap = BoundCheck::new("2p^-(k-l)", PowerBound::integral(2u32, ctx, l as i64 - k as i64), true, &volume);
    let case = |lemma, check| LemmaCase {
        lemma,
        p: ctx.p(),
        k,
        l: Some(l),
        y: None,
        z: None,
        volume: volume.clone(),
        checks: vec![check],
    };
    Ok((case(LemmaId::ShiftedHalf, half), case(LemmaId::ShiftedGap, gap)))
}

fn pair_case(lemma: LemmaId, ctx: PrimeContext, k: u32, z: u64, volume: ExactVolume) -> LemmaCase {
    let bound = PowerBound::integral(k + 1, ctx, -(k as i64));
    LemmaCase {
        lemma,
        p: ctx.p(),
        k,
        l: None,
        y: None,
        z: Some(z),
        checks: vec![BoundCheck::new("(k+1)p^-k", bound, true, &volume)],
        volume,
    }
}

/// `{(x, y) : v(xy - z) >= k}`, bounded by `(k+1) p^-k`.
pub fn vol_product_pair(ctx: PrimeContext, k: u32, z: u64, budget: u64) -> Result<LemmaCase, PadicError> {
    let poly = &(&v("x") * &v("y")) - &c(z);
    let volume = volume_of(&["x", "y"], poly, k, ctx, budget)?;
    Ok(pair_case(LemmaId::ProductPair, ctx, k, z, volume))
}

/// `{(x, y) : v(x(y - z)) >= k}`, bounded by `(k+1) p^-k`.
pub fn vol_scaled_shift_pair(ctx: PrimeContext, k: u32, z: u64, budget: u64) -> Result<LemmaCase, PadicError> {
    let poly = &v("x") * &(&v("y") - &c(z));
    let volume = volume_of(&["x", "y"], poly, k, ctx, budget)?;
    Ok(pair_case(LemmaId::ScaledShiftPair, ctx, k, z, volume))
}

/// Whether `(p, l, z)` falls in the 2-adic exception: `p = 2` and
/// `v_2(z) = 2l - 2 < k`.
pub fn is_two_adic_exception(p: u64, k: u32, l: u32, z: u64) -> bool {
    p == 2 && l >= 1 && valuation_i128(z as i128, 2) == Valuation::Finite(2 * l - 2) && 2 * l - 2 < k
}

/// `{x : v(x(x - p^l) - z) >= k}` against the half-exponent bound and the
/// gap bound. Odd `p` asserts the gap bound with constant 6. For `p = 2`
/// outside the exception the constant 8 is reported, not asserted; inside
/// it the sub-case is chosen by `w = z + 2^(2l-2)`:
/// `v(w) >= k` gives `2^-ceil(k/2)`, odd `v(w) < k` gives volume zero, and
/// otherwise `8 |w|^(-1/2) 2^-k`, reading `|w|` as the 2-adic absolute
/// value `2^-v(w)`.
pub fn vol_quadratic_target(ctx: PrimeContext, k: u32, l: u32, z: u64, budget: u64) -> Result<(LemmaCase, LemmaCase), PadicError> {
    let pl = p_pow(ctx, l);
    let poly = &(&v("x") * &(&v("x") - &c(pl))) - &c(z);
    let volume = volume_of(&["x"], poly, k, ctx, budget)?;
    let half = BoundCheck::new("2p^-ceil(k/2)", PowerBound::integral(2u32, ctx, -ceil_half(k)), true, &volume);
    let gap_exp = l as i64 - k as i64;
    let gap = if ctx.p() != 2 {
        BoundCheck::new("6p^-(k-l), odd p", PowerBound::integral(6u32, ctx, gap_exp), true, &volume)
    } else if !is_two_adic_exception(2, k, l, z) {
        BoundCheck::new("8p^-(k-l), p=2 reported", PowerBound::integral(8u32, ctx, gap_exp), false, &volume)
    } else {
        let w = z as i128 + (1i128 << (2 * l - 2));
        match valuation_i128(w, 2) {
            Valuation::Finite(vw) if vw < k && vw % 2 == 1 => {
                BoundCheck::new("exception: v(w)<k odd, volume zero", PowerBound::integral(0u32, ctx, 0), true, &volume)
            }
            Valuation::Finite(vw) if vw < k => BoundCheck::new(
                "exception: v(w)<k even, 8*2^(v(w)/2-k) (2-adic |w|)",
                PowerBound::new(8u32, ctx, vw as i64 - 2 * k as i64, 2),
                true,
                &volume,
            ),
            _ => BoundCheck::new("exception: v(w)>=k, 2^-ceil(k/2)", PowerBound::integral(1u32, ctx, -ceil_half(k)), true, &volume),
        }
    };
    let case = |lemma, check| LemmaCase {
        lemma,
        p: ctx.p(),
        k,
        l: Some(l),
        y: None,
        z: Some(z),
        volume: volume.clone(),
        checks: vec![check],
    };
    Ok((case(LemmaId::QuadraticHalf, half), case(LemmaId::QuadraticGap, gap)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Every residue modulo `p^k`.
    Exhaustive,
    /// A fixed list, reduced modulo `p^k`.
    Fixed(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lemmas: Vec<LemmaId>,
    pub primes: Vec<u64>,
    pub k_max: u32,
    pub l_max: u32,
    pub samples: SampleMode,
}

impl GridSpec {
    /// All seven sets over `p` in {2, 3, 5}, `k, l <= 4`, residues exhaustive.
    pub fn standard() -> Self {
        GridSpec {
            lemmas: LemmaId::ALL.to_vec(),
            primes: vec![2, 3, 5],
            k_max: 4,
            l_max: 4,
            samples: SampleMode::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tightness {
    pub stratum: String,
    /// Largest `volume * p^ceil(k/2)` seen.
    pub max_scaled: String,
    pub at_least_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub cases: u64,
    pub passed: u64,
    pub failed: u64,
    pub failures: Vec<LemmaCase>,
    /// Cases that hit the node budget, recorded rather than fatal.
    pub budget_exceeded: Vec<String>,
    pub half_bound_tightness: Vec<Tightness>,
    /// Largest `volume * 2^(k-l)` over non-exceptional `p = 2` cases of the
    /// quadratic target, where no constant is asserted.
    pub two_adic_gap_max: Option<String>,
    /// SHA-256 over every case record in order.
    pub digest: String,
}

enum Job {
    Linear(u64, u32, u64, u64),
    Shifted(u64, u32, u32),
    Product(u64, u32, u64),
    ScaledShift(u64, u32, u64),
    Quadratic(u64, u32, u32, u64),
}

impl Job {
    fn describe(&self) -> String {
        match self {
            Job::Linear(p, k, y, z) => format!("xy-z p={p} k={k} y={y} z={z}"),
            Job::Shifted(p, k, l) => format!("k/2,k-l p={p} k={k} l={l}"),
            Job::Product(p, k, z) => format!("k+1 p={p} k={k} z={z}"),
            Job::ScaledShift(p, k, z) => format!("k+1-xyz p={p} k={k} z={z}"),
            Job::Quadratic(p, k, l, z) => format!("zk2,k-l-z p={p} k={k} l={l} z={z}"),
        }
    }

    fn run(&self, budget: u64) -> Result<Vec<LemmaCase>, PadicError> {
        let ctx = |p: u64| PrimeContext::new(p);
        Ok(match *self {
            Job::Linear(p, k, y, z) => vec![vol_linear(ctx(p)?, k, y, z, budget)?],
            Job::Shifted(p, k, l) => {
                let (a, b) = vol_shifted_quadratic(ctx(p)?, k, l, budget)?;
                vec![a, b]
            }
            Job::Product(p, k, z) => vec![vol_product_pair(ctx(p)?, k, z, budget)?],
            Job::ScaledShift(p, k, z) => vec![vol_scaled_shift_pair(ctx(p)?, k, z, budget)?],
            Job::Quadratic(p, k, l, z) => {
                let (a, b) = vol_quadratic_target(ctx(p)?, k, l, z, budget)?;
                vec![a, b]
            }
        })
    }
}

fn samples(mode: &SampleMode, p: u64, k: u32) -> Vec<u64> {
    let m = p.pow(k);
    match mode {
        SampleMode::Exhaustive => (0..m).collect(),
        SampleMode::Fixed(list) => {
            let mut v: Vec<u64> = list.iter().map(|z| z % m).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    }
}

fn jobs(grid: &GridSpec) -> Vec<Job> {
    let has = |id| grid.lemmas.contains(&id);
    let mut out = Vec::new();
    for &p in &grid.primes {
        for k in 0..=grid.k_max {
            let zs = samples(&grid.samples, p, k);
            if has(LemmaId::LinearTarget) {
                for &y in &zs {
                    for &z in &zs {
                        out.push(Job::Linear(p, k, y, z));
                    }
                }
            }
            if has(LemmaId::ShiftedHalf) || has(LemmaId::ShiftedGap) {
                for l in 0..=grid.l_max {
                    out.push(Job::Shifted(p, k, l));
                }
            }
            for &z in &zs {
                if has(LemmaId::ProductPair) {
                    out.push(Job::Product(p, k, z));
                }
                if has(LemmaId::ScaledShiftPair) {
                    out.push(Job::ScaledShift(p, k, z));
                }
            }
            if has(LemmaId::QuadraticHalf) || has(LemmaId::QuadraticGap) {
                for l in 0..=grid.l_max {
                    for &z in &zs {
                        out.push(Job::Quadratic(p, k, l, z));
                    }
                }
            }
        }
    }
    out
}

fn ratio_string(vol: &ExactVolume, shift: i64) -> (ExactVolume, String) {
    let scaled = vol.scale(&BigUint::one(), shift);
    let s = scaled.to_string();
    (scaled, s)
}

/// Runs every case of the grid. Cases are independent and computed in
/// parallel; the report is assembled in grid order.
pub fn lemma_audit(grid: &GridSpec, budget: u64) -> AuditReport {
    let jobs = jobs(grid);
    let results: Vec<Result<Vec<LemmaCase>, String>> = jobs
        .par_iter()
        .map(|j| j.run(budget).map_err(|e| format!("{}: {e}", j.describe())))
        .collect();

    let mut hasher = Sha256::new();
    let mut report = AuditReport {
        cases: 0,
        passed: 0,
        failed: 0,
        failures: Vec::new(),
        budget_exceeded: Vec::new(),
        half_bound_tightness: Vec::new(),
        two_adic_gap_max: None,
        digest: String::new(),
    };
    // (stratum, best scaled value)
    let mut tight: Vec<(String, Option<ExactVolume>)> = vec![
        ("k/2 l>=ceil(k/2)".into(), None),
        ("k/2 l<ceil(k/2)".into(), None),
    ];
    let mut two_adic: Option<ExactVolume> = None;
    for r in results {
        let cases = match r {
            Ok(c) => c,
            Err(e) => {
                report.budget_exceeded.push(e);
                continue;
            }
        };
        for case in cases {
            if !grid.lemmas.contains(&case.lemma) {
                continue;
            }
            hasher.update(serde_json::to_vec(&case).expect("case serializes"));
            hasher.update(b"\n");
            report.cases += 1;
            if case.pass() {
                report.passed += 1;
            } else {
                report.failed += 1;
                report.failures.push(case.clone());
            }
            if case.lemma == LemmaId::ShiftedHalf {
                let l = case.l.unwrap_or(0);
                let slot = usize::from(l < case.k.div_ceil(2));
                let (scaled, _) = ratio_string(&case.volume, ceil_half(case.k));
                let best = &mut tight[slot].1;
                if best.as_ref().is_none_or(|b| scaled > *b) {
                    *best = Some(scaled);
                }
            }
            if case.lemma == LemmaId::QuadraticGap
                && case.p == 2
                && case.checks.iter().any(|c| !c.asserted)
            {
                let shift = case.k as i64 - case.l.unwrap_or(0) as i64;
                let (scaled, _) = ratio_string(&case.volume, shift);
                if two_adic.as_ref().is_none_or(|b| scaled > *b) {
                    two_adic = Some(scaled);
                }
            }
        }
    }
    report.half_bound_tightness = tight
        .into_iter()
        .filter_map(|(stratum, best)| {
            best.map(|b| Tightness {
                stratum,
                at_least_one: b >= ExactVolume::one(b.context()),
                max_scaled: b.to_string(),
            })
        })
        .collect();
    report.two_adic_gap_max = two_adic.map(|v| v.to_string());
    report.digest = hex::encode(hasher.finalize());
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::DEFAULT_BUDGET;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(p).unwrap()
    }

    fn vol(s: &str) -> ExactVolume {
        s.parse().unwrap()
    }

    #[test]
    fn linear_examples() {
        let c = vol_linear(ctx(3), 2, 3, 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(c.volume, vol("1/3^1"));
        assert_eq!(c.checks[0].bound.to_string(), "1*3^(-1)");
        assert!(c.pass());
        let c = vol_linear(ctx(5), 0, 7, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(c.volume, ExactVolume::one(ctx(5)));
        assert!(c.pass());
        let c = vol_linear(ctx(3), 1, 3, 1, DEFAULT_BUDGET).unwrap();
        assert!(c.volume.is_zero());
        assert!(c.pass());
    }

    #[test]
    fn shifted_examples() {
        let (a, b) = vol_shifted_quadratic(ctx(3), 2, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.volume, vol("1/3^1"));
        assert!(a.pass() && b.pass());
        assert_eq!(a.checks[0].bound.to_string(), "2*3^(-1)");
        assert_eq!(b.checks[0].bound.to_string(), "2*3^(-1)");
        let (a, _) = vol_shifted_quadratic(ctx(2), 0, 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.volume, ExactVolume::one(ctx(2)));
        // l >= ceil(k/2): the set is exactly v(x) >= ceil(k/2) = 1.
        let (a, b) = vol_shifted_quadratic(ctx(5), 2, 5, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.volume, vol("1/5^1"));
        assert!(a.pass() && b.pass());
    }

    #[test]
    fn pair_examples() {
        assert_eq!(vol_product_pair(ctx(2), 1, 1, DEFAULT_BUDGET).unwrap().volume, vol("1/2^2"));
        assert_eq!(vol_product_pair(ctx(3), 1, 0, DEFAULT_BUDGET).unwrap().volume, vol("5/3^2"));
        assert_eq!(vol_product_pair(ctx(7), 0, 4, DEFAULT_BUDGET).unwrap().volume, vol("1/7^0"));
        assert_eq!(vol_scaled_shift_pair(ctx(3), 1, 0, DEFAULT_BUDGET).unwrap().volume, vol("5/3^2"));
        let c = vol_scaled_shift_pair(ctx(2), 2, 1, DEFAULT_BUDGET).unwrap();
        assert!(c.volume <= vol("3/2^2"));
        assert!(c.pass());
    }

    #[test]
    fn quadratic_examples() {
        let (a, b) = vol_quadratic_target(ctx(5), 1, 0, 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.volume, vol("2/5^1"));
        assert_eq!(a.checks[0].bound.to_string(), "2*5^(-1)");
        assert!(a.pass() && b.pass());
        assert!(is_two_adic_exception(2, 2, 1, 1));
        assert!(!is_two_adic_exception(2, 2, 1, 2));
        assert!(!is_two_adic_exception(3, 2, 1, 1));
        for z in [1u64, 3] {
            let (_, gap) = vol_quadratic_target(ctx(2), 2, 1, z, DEFAULT_BUDGET).unwrap();
            assert!(gap.checks[0].case.starts_with("exception"));
            assert!(gap.pass(), "{gap:?}");
        }
    }

    #[test]
    fn empty_grid_is_empty() {
        let grid = GridSpec {
            lemmas: vec![],
            primes: vec![2],
            k_max: 2,
            l_max: 2,
            samples: SampleMode::Exhaustive,
        };
        let r = lemma_audit(&grid, DEFAULT_BUDGET);
        assert_eq!(r.cases, 0);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn odd_prime_gap_constant_fails_only_at_colliding_roots() {
        let grid = GridSpec {
            lemmas: vec![LemmaId::QuadraticGap],
            primes: vec![3, 5],
            k_max: 3,
            l_max: 3,
            samples: SampleMode::Exhaustive,
        };
        let r = lemma_audit(&grid, DEFAULT_BUDGET);
        assert!(r.cases > 0);
        // x(x - 1) - z has a double root mod p when p | 1 + 4z; there the
        // volume decays like p^(-k/2) and outgrows 6 p^-k.
        for f in &r.failures {
            assert_eq!(f.l, Some(0), "{f:?}");
            assert_eq!((1 + 4 * f.z.unwrap()) % f.p, 0, "{f:?}");
        }
        let (bad, _) = vol_quadratic_target(ctx(5), 3, 0, 6, DEFAULT_BUDGET).unwrap();
        assert_eq!(bad.volume, vol("2/5^2"));
        let (_, gap) = vol_quadratic_target(ctx(5), 3, 0, 6, DEFAULT_BUDGET).unwrap();
        assert!(!gap.pass());
    }
}

//! Domains of multiplicative matrices with a fixed p-power diagonal.
//!
//! For a diagonal `(p^k1, ..., p^kn)` the below-diagonal entries that make
//! the row lattice multiplicative over `Z_p` form a domain in the unit box.
//! For `n <= 4` the domain is cut out by explicit valuation inequalities;
//! its volume `mu` feeds the local coefficient
//! `a_n(k; p) = sum over |profile| = k of p^(sum (n-i) k_i) * mu(profile)`,
//! which counts multiplicative sublattices of index `p^k`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{count_fixed_diagonal, t_count, LatticeError};
use crate::padic::{
    solution_volume, valuation, CompiledSystem, ConstraintSystem, ExactVolume, IntPolynomial, PadicError,
    PrimeContext, Valuation,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("no explicit membership system for dimension {0}; supported: 2, 3, 4")]
    UnsupportedDimension(usize),
    #[error("profile has {got} exponents, expected {expected}")]
    ProfileLength { expected: usize, got: usize },
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("local coefficient a_{n}({k}; {p}) is not an integer: {value}")]
    NonIntegral { n: usize, k: u32, p: u64, value: String },
}

/// Diagonal valuations `(k1, ..., kn)` at a prime.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiagonalProfile {
    pub exponents: Vec<u32>,
    #[serde(rename = "p")]
    pub ctx: PrimeContext,
}

impl DiagonalProfile {
    pub fn new(exponents: Vec<u32>, ctx: PrimeContext) -> Self {
        DiagonalProfile { exponents, ctx }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn total(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// The diagonal entries `p^ki`.
    pub fn diagonal(&self) -> Vec<BigUint> {
        self.exponents.iter().map(|&k| self.ctx.pow(k)).collect()
    }

    /// `sum (n - i) k_i` over 1-based `i`: the number of reduced
    /// below-diagonal fillings is `p` to this power.
    pub fn weight_exponent(&self) -> u32 {
        let n = self.dim() as u32;
        self.exponents
            .iter()
            .enumerate()
            .map(|(i, &k)| (n - 1 - i as u32) * k)
            .sum()
    }

    /// The profile without its last exponent.
    pub fn truncated(&self) -> DiagonalProfile {
        DiagonalProfile::new(self.exponents[..self.dim() - 1].to_vec(), self.ctx)
    }
}

/// Names `x21, x31, x32, x41, ...` of the below-diagonal entries, row by row.
pub fn entry_names(n: usize) -> Vec<String> {
    (1..n)
        .flat_map(|i| (0..i).map(move |j| format!("x{}{}", i + 1, j + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipSystem {
    pub n: usize,
    pub profile: DiagonalProfile,
    pub system: ConstraintSystem,
    /// Each constraint before the diagonal substitution.
    pub labels: Vec<String>,
    /// Constraints with threshold 0, kept but always satisfied.
    pub vacuous: Vec<bool>,
}

/// Constraint templates: the polynomial with diagonal entries `d1..d4` and
/// which profile exponents sum to the threshold.
const TEMPLATES: [(&str, &[usize]); 10] = [
    ("x21*(x21 - d2)", &[0]),
    ("x21*(x31 - x32)", &[0]),
    ("x32*(x32 - d3)", &[1]),
    ("d2*x31*(x31 - d3) - x21*x32*(x32 - d3)", &[0, 1]),
    ("x21*(x41 - x42)", &[0]),
    ("x32*(x42 - x43)", &[1]),
    ("d2*x31*(x41 - x43) - x21*x32*(x42 - x43)", &[0, 1]),
    ("x43*(x43 - d4)", &[2]),
    ("d3*x42*(x42 - d4) - x32*x43*(x43 - d4)", &[1, 2]),
    (
        "d2*d3*x41*(x41 - d4) - d2*x31*x43*(x43 - d4) - d3*x21*x42*(x42 - d4) + x21*x32*x43*(x43 - d4)",
        &[0, 1, 2],
    ),
];

/// Expands a template: substitutes the diagonal and multiplies out.
fn expand(template: &str, diag: &[BigUint]) -> IntPolynomial {
    // Each template is a sum of signed products whose factors are variables,
    // diagonal symbols, or parenthesized differences.
    let mut total = IntPolynomial::zero();
    let atom = |s: &str| -> IntPolynomial {
        let s = s.trim();
        if let Some(i) = s.strip_prefix('d') {
            let i: usize = i.parse().expect("diagonal symbol");
            IntPolynomial::constant(BigInt::from(diag[i - 1].clone()))
        } else {
            IntPolynomial::var(s)
        }
    };
    let mut rest = template.trim();
    let mut sign = 1;
    loop {
        let (term, next, next_sign) = split_top_level(rest);
        let mut prod = IntPolynomial::constant(sign);
        for factor in split_factors(term) {
            let f = if let Some(inner) = factor.strip_prefix('(') {
                let inner = inner.strip_suffix(')').expect("balanced");
                let (a, b) = inner.split_once(" - ").expect("difference");
                &atom(a) - &atom(b)
            } else {
                atom(factor)
            };
            prod = &prod * &f;
        }
        total = &total + &prod;
        match next {
            Some(n) => {
                rest = n;
                sign = next_sign;
            }
            None => return total,
        }
    }
}

/// Splits off the first top-level term of `a - b + c`.
fn split_top_level(s: &str) -> (&str, Option<&str>, i32) {
    let mut depth = 0;
    let bytes = s.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'-' | b'+' if depth == 0 && i > 0 && bytes[i - 1] == b' ' => {
                let sign = if bytes[i] == b'-' { -1 } else { 1 };
                return (s[..i].trim(), Some(s[i + 1..].trim()), sign);
            }
            _ => {}
        }
    }
    (s.trim(), None, 1)
}

fn split_factors(term: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, ch) in term.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '*' if depth == 0 => {
                out.push(term[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(term[start..].trim());
    out
}

/// The explicit inequality system of the domain for `n` in {2, 3, 4}.
pub fn membership_system(n: usize, profile: &DiagonalProfile) -> Result<MembershipSystem, DomainError> {
    let count = match n {
        2 => 1,
        3 => 4,
        4 => 10,
        _ => return Err(DomainError::UnsupportedDimension(n)),
    };
    check_profile(n, profile)?;
    let mut diag = profile.diagonal();
    diag.resize(4, BigUint::one());
    let mut system = ConstraintSystem::new(entry_names(n))?;
    let mut labels = Vec::new();
    let mut vacuous = Vec::new();
    for (template, parts) in TEMPLATES.iter().take(count) {
        let threshold: u32 = parts.iter().map(|&i| profile.exponents[i]).sum();
        system.add_constraint(expand(template, &diag), threshold)?;
        labels.push(diagonal_label(template));
        vacuous.push(threshold == 0);
    }
    Ok(MembershipSystem {
        n,
        profile: profile.clone(),
        system,
        labels,
        vacuous,
    })
}

/// Writes diagonal symbols in matrix-entry notation: `d2` becomes `x22`.
fn diagonal_label(template: &str) -> String {
    let mut out = String::new();
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, chars.peek()) {
            ('d', Some(&i)) if i.is_ascii_digit() => {
                chars.next();
                out.extend(['x', i, i]);
            }
            _ => out.push(c),
        }
    }
    out
}

/// Whether every product of two rows lies in the `Z_p`-span of the rows.
///
/// `rows` is a full lower-triangular matrix with nonzero diagonal. Each
/// product is solved for exactly by back-substitution over the rationals;
/// it is in the span iff no coefficient has `p` in its denominator.
pub fn closure_over_zp(rows: &[Vec<BigInt>], ctx: PrimeContext) -> bool {
    let n = rows.len();
    let in_span = |w: Vec<BigInt>| -> bool {
        let mut rest: Vec<BigRational> = w.into_iter().map(BigRational::from_integer).collect();
        for c in (0..n).rev() {
            if rest[c].is_zero() {
                continue;
            }
            let alpha = &rest[c] / BigRational::from_integer(rows[c][c].clone());
            if valuation(alpha.denom(), ctx) != Valuation::Finite(0) {
                return false;
            }
            for (j, slot) in rest.iter_mut().enumerate().take(c) {
                *slot -= &alpha * BigRational::from_integer(rows[c][j].clone());
            }
        }
        true
    };
    (0..n).all(|j| {
        (j..n).all(|k| {
            let w: Vec<BigInt> = (0..n).map(|c| &rows[j][c] * &rows[k][c]).collect();
            in_span(w)
        })
    })
}

fn check_profile(n: usize, profile: &DiagonalProfile) -> Result<(), DomainError> {
    if profile.dim() != n {
        return Err(DomainError::ProfileLength {
            expected: n,
            got: profile.dim(),
        });
    }
    Ok(())
}

/// Membership of the matrix with diagonal `p^ki` and the given
/// below-diagonal entries (order of [`entry_names`]); any `n >= 2`.
pub fn generic_membership(profile: &DiagonalProfile, entries: &[BigInt]) -> bool {
    let n = profile.dim();
    assert_eq!(entries.len(), n * (n - 1) / 2, "one entry per below-diagonal slot");
    let diag = profile.diagonal();
    let mut rows = vec![vec![BigInt::zero(); n]; n];
    let mut t = 0;
    for i in 0..n {
        for j in 0..i {
            rows[i][j] = entries[t].clone();
            t += 1;
        }
        rows[i][i] = BigInt::from(diag[i].clone());
    }
    closure_over_zp(&rows, profile.ctx)
}

/// Machine-word membership test for repeated evaluation.
///
/// With a p-power diagonal the back-substitution denominators are p-powers,
/// so `Z_p`-integrality is plain integrality, and residuals may be reduced
/// modulo the index since the lattice contains `index * Z^n`.
pub struct MembershipEvaluator {
    n: usize,
    diag: Vec<i64>,
    modulus: i64,
}

impl MembershipEvaluator {
    /// `None` when the index is too large for word arithmetic.
    pub fn new(profile: &DiagonalProfile) -> Option<Self> {
        let modulus = profile.ctx.pow_u64(profile.total()).filter(|&m| m < (1 << 31))?;
        Some(MembershipEvaluator {
            n: profile.dim(),
            diag: profile
                .exponents
                .iter()
                .map(|&k| profile.ctx.pow_u64(k).expect("fits") as i64)
                .collect(),
            modulus: modulus as i64,
        })
    }

    pub fn is_member(&self, entries: &[u64]) -> bool {
        let n = self.n;
        let m = self.modulus;
        let mut rows = [[0i64; 8]; 8];
        let mut t = 0;
        for i in 0..n {
            for j in 0..i {
                rows[i][j] = (entries[t] % m as u64) as i64;
                t += 1;
            }
            rows[i][i] = self.diag[i];
        }
        for j in 1..n {
            for k in j..n {
                let mut rest = [0i64; 8];
                for c in 0..=j {
                    rest[c] = rows[j][c] * rows[k][c] % m;
                }
                for c in (0..=j).rev() {
                    let d = self.diag[c];
                    if rest[c] % d != 0 {
                        return false;
                    }
                    let alpha = rest[c] / d;
                    if alpha != 0 {
                        for i in 0..c {
                            rest[i] = (rest[i] - alpha * rows[c][i]).rem_euclid(m);
                        }
                    }
                }
            }
        }
        true
    }
}

/// Outcome of comparing the inequality system with the closure test on
/// every residue assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub profile: Vec<u32>,
    pub p: u64,
    /// Entries range over residues mod `p^precision`.
    pub precision: u32,
    pub points: u64,
    pub members: u64,
    pub mismatches: u64,
    /// Assignments also checked with the exact rational closure test.
    pub exact_checks: u64,
    /// Smallest assignment (in odometer order) where the two tests disagree.
    pub first_mismatch: Option<Vec<u64>>,
}

/// Every `EXACT_STRIDE`-th assignment is re-checked with [`generic_membership`].
const EXACT_STRIDE: u64 = 4099;

/// Compares [`membership_system`] with the closure test on all assignments
/// of the below-diagonal entries modulo `p^C`, where `C` is the larger of
/// the system's stability precision and the profile total (both tests only
/// see residues modulo that power).
///
/// The closure test runs through [`MembershipEvaluator`]; a deterministic
/// sample of points, and every point where the two sides disagree, is
/// re-checked with the exact rational test, and a disagreement there also
/// counts as a mismatch.
pub fn equivalence_check(profile: &DiagonalProfile, max_points: u64) -> Result<EquivalenceReport, DomainError> {
    let n = profile.dim();
    let ctx = profile.ctx;
    let ms = membership_system(n, profile)?;
    let precision = ms.system.stability_precision().max(profile.total());
    let too_big = || LatticeError::InvalidArgument(format!("residue box for {:?} is too large", profile.exponents));
    let modulus = ctx.pow_u64(precision).filter(|&m| m < (1 << 31)).ok_or_else(too_big)?;
    let nvars = ms.system.variables().len();
    let points = (modulus as u128).pow(nvars as u32);
    if points > max_points as u128 {
        return Err(DomainError::Lattice(LatticeError::ResourceLimit {
            n,
            k: profile.total() as u64,
            ceiling: max_points,
        }));
    }
    let points = points as u64;
    let compiled = CompiledSystem::new(&ms.system, ctx).ok_or_else(too_big)?;
    let evaluator = MembershipEvaluator::new(profile).ok_or_else(too_big)?;
    let exact = |e: &[u64]| -> bool {
        let big: Vec<BigInt> = e.iter().map(|&v| BigInt::from(v)).collect();
        generic_membership(profile, &big)
    };

    #[derive(Default)]
    struct Tally {
        members: u64,
        mismatches: u64,
        exact_checks: u64,
        first: Option<Vec<u64>>,
    }
    let inner_points = points / modulus;
    let chunks: Vec<Tally> = (0..modulus)
        .into_par_iter()
        .map(|lead| {
            let mut t = Tally::default();
            let mut e = vec![0u64; nvars];
            e[0] = lead;
            for step in 0..inner_points {
                let by_system = compiled.is_satisfied(&e);
                let by_closure = evaluator.is_member(&e);
                let sampled = (lead * inner_points + step).is_multiple_of(EXACT_STRIDE);
                let mut bad = by_system != by_closure;
                if sampled || bad {
                    t.exact_checks += 1;
                    // a wrong fast evaluator is a mismatch in its own right
                    bad |= exact(&e) != by_closure;
                }
                if bad {
                    t.mismatches += 1;
                    t.first.get_or_insert_with(|| e.clone());
                }
                t.members += by_system as u64;
                for slot in e[1..].iter_mut().rev() {
                    *slot += 1;
                    if *slot < modulus {
                        break;
                    }
                    *slot = 0;
                }
            }
            t
        })
        .collect();
    let mut report = EquivalenceReport {
        n,
        profile: profile.exponents.clone(),
        p: ctx.p(),
        precision,
        points,
        members: 0,
        mismatches: 0,
        exact_checks: 0,
        first_mismatch: None,
    };
    for t in chunks {
        report.members += t.members;
        report.mismatches += t.mismatches;
        report.exact_checks += t.exact_checks;
        if report.first_mismatch.is_none() {
            report.first_mismatch = t.first;
        }
    }
    Ok(report)
}

/// Volume of the domain, computed by counting reduced fillings with the
/// lattice counter: `mu = count / p^(sum (n-i) k_i)`. Works for any `n`.
pub fn mu_by_enumeration(profile: &DiagonalProfile, ceiling: u64) -> Result<ExactVolume, DomainError> {
    let ctx = profile.ctx;
    if profile.total() == 0 || profile.dim() <= 1 {
        return Ok(ExactVolume::one(ctx));
    }
    let diag: Vec<u64> = profile
        .exponents
        .iter()
        .map(|&k| {
            ctx.pow_u64(k)
                .ok_or_else(|| LatticeError::InvalidArgument("diagonal entry overflows".into()))
        })
        .collect::<Result<_, _>>()?;
    let count = count_fixed_diagonal(&diag, false, ceiling)?;
    Ok(ExactVolume::new(count.into(), profile.weight_exponent(), ctx))
}

/// `mu_p(profile)`: the volume of the domain in the unit box.
///
/// Dimensions 2 to 4 go through the explicit inequality system and the
/// digit search; other dimensions through [`mu_by_enumeration`], with
/// `budget` acting as the node ceiling in both cases.
pub fn mu(profile: &DiagonalProfile, budget: u64) -> Result<ExactVolume, DomainError> {
    let n = profile.dim();
    if profile.total() == 0 || n <= 1 {
        return Ok(ExactVolume::one(profile.ctx));
    }
    match n {
        2..=4 => {
            let ms = membership_system(n, profile)?;
            Ok(solution_volume(&ms.system, profile.ctx, budget)?)
        }
        _ => mu_by_enumeration(profile, budget),
    }
}

/// All ordered profiles of `n` non-negative exponents summing to `k`,
/// lexicographically descending.
pub fn compositions(k: u32, n: usize) -> Vec<Vec<u32>> {
    fn go(k: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            go(k - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        go(k, n, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTerm {
    pub profile: Vec<u32>,
    pub weight_exponent: u32,
    pub mu: ExactVolume,
    /// `p^weight_exponent * mu`, always an integer.
    #[serde(serialize_with = "as_decimal")]
    pub contribution: BigUint,
}

fn as_decimal<S: serde::Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalCoefficient {
    pub n: usize,
    pub k: u32,
    pub p: u64,
    #[serde(serialize_with = "as_decimal")]
    pub value: BigUint,
    pub breakdown: Vec<CoefficientTerm>,
}

/// `a_n(k; p)` assembled profile by profile from domain volumes.
pub fn local_coefficient(
    n: usize,
    k: u32,
    ctx: PrimeContext,
    budget: u64,
) -> Result<LocalCoefficient, DomainError> {
    if n == 0 {
        return Err(DomainError::UnsupportedDimension(0));
    }
    let terms: Vec<Result<CoefficientTerm, DomainError>> = compositions(k, n)
        .into_par_iter()
        .map(|exps| {
            let profile = DiagonalProfile::new(exps, ctx);
            let m = mu(&profile, budget)?;
            let w = profile.weight_exponent();
            let scaled = m.scale(&BigUint::one(), w as i64);
            let contribution = scaled.as_integer().ok_or_else(|| DomainError::NonIntegral {
                n,
                k,
                p: ctx.p(),
                value: scaled.to_string(),
            })?;
            Ok(CoefficientTerm {
                profile: profile.exponents,
                weight_exponent: w,
                mu: m,
                contribution,
            })
        })
        .collect();
    let breakdown = terms.into_iter().collect::<Result<Vec<_>, _>>()?;
    let value = breakdown.iter().map(|t| &t.contribution).sum();
    Ok(LocalCoefficient {
        n,
        k,
        p: ctx.p(),
        value,
        breakdown,
    })
}

/// The local coefficient assembled from volumes next to the direct count
/// of multiplicative sublattices of the same index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub n: usize,
    pub k: u32,
    pub p: u64,
    #[serde(serialize_with = "as_decimal")]
    pub from_volumes: BigUint,
    #[serde(serialize_with = "as_decimal")]
    pub direct: BigUint,
    pub pass: bool,
}

/// Compares [`local_coefficient`] with `t_n(p^k)` from the lattice counter.
pub fn coefficient_identity(
    n: usize,
    k: u32,
    ctx: PrimeContext,
    budget: u64,
    ceiling: u64,
) -> Result<IdentityCheck, DomainError> {
    let from_volumes = local_coefficient(n, k, ctx, budget)?.value;
    let index = ctx
        .pow_u64(k)
        .ok_or_else(|| LatticeError::InvalidArgument(format!("{}^{k} overflows", ctx.p())))?;
    let direct = t_count(n, index, ceiling)?.value;
    Ok(IdentityCheck {
        n,
        k,
        p: ctx.p(),
        pass: from_volumes == direct,
        from_volumes,
        direct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberCheck {
    pub n: usize,
    pub profile: Vec<u32>,
    pub p: u64,
    /// `mu(k1..kn)`.
    pub left: ExactVolume,
    /// `2^(n-1) p^(-sum_(j<n) ceil(kj/2)) mu(k1..k_(n-1))`.
    pub right: ExactVolume,
    pub pass: bool,
}

/// Compares a domain volume with the volume one dimension down, scaled by
/// the fiber bound.
pub fn fiber_ratio_check(profile: &DiagonalProfile, budget: u64) -> Result<FiberCheck, DomainError> {
    let n = profile.dim();
    if !(3..=4).contains(&n) {
        return Err(DomainError::UnsupportedDimension(n));
    }
    let left = mu(profile, budget)?;
    let lower = mu(&profile.truncated(), budget)?;
    let shift: u32 = profile.exponents[..n - 1].iter().map(|k| k.div_ceil(2)).sum();
    let right = lower.scale(&BigUint::from(1u32 << (n - 1)), -(shift as i64));
    Ok(FiberCheck {
        n,
        profile: profile.exponents.clone(),
        p: profile.ctx.p(),
        pass: left <= right,
        left,
        right,
    })
}

//! p-adic valuations, integer polynomials, valuation constraint systems and
//! the exact volume engine.

mod poly;
mod volume;

pub use poly::{IntPolynomial, Monomial, ParsePolynomialError};
pub use volume::{solution_volume, CompiledSystem, DEFAULT_BUDGET};

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PadicError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("constraint mentions undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("volume search exceeded its budget of {budget} nodes")]
    BudgetExceeded { budget: u64 },
    #[error("invalid budget: must be positive")]
    ZeroBudget,
    #[error("malformed exact volume `{0}`")]
    MalformedVolume(String),
    #[error("malformed constraint system: {0}")]
    MalformedSystem(String),
}

/// The p-adic valuation of an element of Z_p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(u32),
    Infinity,
}

impl Valuation {
    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinity)
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinity => None,
        }
    }

    /// `v >= c` for a finite threshold.
    pub fn at_least(self, c: u32) -> bool {
        self >= Valuation::Finite(c)
    }
}

impl Add for Valuation {
    type Output = Valuation;

    fn add(self, rhs: Valuation) -> Valuation {
        match (self, rhs) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinity,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinity => f.write_str("inf"),
        }
    }
}

/// A prime, checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PrimeContext {
    p: u64,
}

impl PrimeContext {
    pub fn new(p: u64) -> Result<Self, PadicError> {
        if is_prime(p) {
            Ok(PrimeContext { p })
        } else {
            Err(PadicError::NotPrime(p))
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn pow(&self, e: u32) -> BigUint {
        num_traits::pow(BigUint::from(self.p), e as usize)
    }

    /// `p^e` if it fits in a u64.
    pub fn pow_u64(&self, e: u32) -> Option<u64> {
        self.p.checked_pow(e)
    }
}

impl<'de> Deserialize<'de> for PrimeContext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = u64::deserialize(d)?;
        PrimeContext::new(p).map_err(serde::de::Error::custom)
    }
}

/// Deterministic Miller-Rabin for the full u64 range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &SMALL {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for &a in &SMALL {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// All primes `<= limit`, ascending.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut sieve = vec![true; limit + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= limit {
        if sieve[i] {
            let mut j = i * i;
            while j <= limit {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u64))
        .collect()
}

pub fn valuation(x: &BigInt, ctx: PrimeContext) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinity;
    }
    let p = BigInt::from(ctx.p);
    let mut x = x.clone();
    let mut v = 0;
    loop {
        let (q, r) = x.div_rem(&p);
        if !r.is_zero() {
            return Valuation::Finite(v);
        }
        x = q;
        v += 1;
    }
}

pub fn valuation_i128(x: i128, p: u64) -> Valuation {
    if x == 0 {
        return Valuation::Infinity;
    }
    let p = p as i128;
    let mut x = x;
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    Valuation::Finite(v)
}

/// One constraint `v_p(poly) >= threshold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub poly: IntPolynomial,
    pub threshold: u32,
}

impl Constraint {
    pub fn is_vacuous(&self) -> bool {
        self.threshold == 0
    }
}

/// A conjunction of valuation constraints over declared variables ranging
/// over Z_p.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintSystem {
    variables: Vec<String>,
    constraints: Vec<Constraint>,
}

impl ConstraintSystem {
    pub fn new<S: Into<String>>(
        variables: impl IntoIterator<Item = S>,
    ) -> Result<Self, PadicError> {
        let mut vars: Vec<String> = Vec::new();
        for v in variables {
            let v = v.into();
            if vars.contains(&v) {
                return Err(PadicError::DuplicateVariable(v));
            }
            vars.push(v);
        }
        Ok(ConstraintSystem {
            variables: vars,
            constraints: Vec::new(),
        })
    }

    pub fn add_constraint(
        &mut self,
        poly: IntPolynomial,
        threshold: u32,
    ) -> Result<(), PadicError> {
        for v in poly.variables() {
            if !self.variables.iter().any(|d| d == v) {
                return Err(PadicError::UndeclaredVariable(v.to_string()));
            }
        }
        self.constraints.push(Constraint { poly, threshold });
        Ok(())
    }

    pub fn with_constraint(
        mut self,
        poly: IntPolynomial,
        threshold: u32,
    ) -> Result<Self, PadicError> {
        self.add_constraint(poly, threshold)?;
        Ok(self)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Satisfaction at a point depends only on the point modulo `p^C`, `C`
    /// being the largest threshold.
    pub fn stability_precision(&self) -> u32 {
        self.constraints
            .iter()
            .map(|c| c.threshold)
            .max()
            .unwrap_or(0)
    }

    /// Direct evaluation at integer values (one per declared variable).
    pub fn is_satisfied(&self, ctx: PrimeContext, values: &[BigInt]) -> bool {
        assert_eq!(values.len(), self.variables.len());
        self.constraints.iter().all(|c| {
            let value = c
                .poly
                .evaluate(|name| values[self.variable_index(name).unwrap()].clone());
            valuation(&value, ctx).at_least(c.threshold)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SystemDoc::from(self)).expect("system serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PadicError> {
        let doc: SystemDoc =
            serde_json::from_str(s).map_err(|e| PadicError::MalformedSystem(e.to_string()))?;
        let mut sys = ConstraintSystem::new(doc.variables)?;
        for c in doc.constraints {
            let poly: IntPolynomial = c
                .poly
                .parse()
                .map_err(|e: ParsePolynomialError| PadicError::MalformedSystem(e.to_string()))?;
            sys.add_constraint(poly, c.threshold)?;
        }
        Ok(sys)
    }
}

impl Serialize for ConstraintSystem {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SystemDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConstraintSystem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = serde_json::Value::deserialize(d)?;
        ConstraintSystem::from_json(&doc.to_string()).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct SystemDoc {
    variables: Vec<String>,
    constraints: Vec<ConstraintDoc>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintDoc {
    poly: String,
    threshold: u32,
}

impl From<&ConstraintSystem> for SystemDoc {
    fn from(sys: &ConstraintSystem) -> Self {
        SystemDoc {
            variables: sys.variables.clone(),
            constraints: sys
                .constraints
                .iter()
                .map(|c| ConstraintDoc {
                    poly: c.poly.to_string(),
                    threshold: c.threshold,
                })
                .collect(),
        }
    }
}

/// An exact rational `m / p^e`, kept in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactVolume {
    numerator: BigUint,
    p_exponent: u32,
    ctx: PrimeContext,
}

impl ExactVolume {
    pub fn new(numerator: BigUint, p_exponent: u32, ctx: PrimeContext) -> Self {
        let mut numerator = numerator;
        let mut e = p_exponent;
        if numerator.is_zero() {
            e = 0;
        } else {
            let p = BigUint::from(ctx.p);
            while e > 0 {
                let (q, r) = numerator.div_rem(&p);
                if !r.is_zero() {
                    break;
                }
                numerator = q;
                e -= 1;
            }
        }
        ExactVolume {
            numerator,
            p_exponent: e,
            ctx,
        }
    }

    pub fn zero(ctx: PrimeContext) -> Self {
        ExactVolume::new(BigUint::zero(), 0, ctx)
    }

    pub fn one(ctx: PrimeContext) -> Self {
        ExactVolume::new(BigUint::one(), 0, ctx)
    }

    /// `p^-e`.
    pub fn p_power(e: u32, ctx: PrimeContext) -> Self {
        ExactVolume::new(BigUint::one(), e, ctx)
    }

    pub fn numerator(&self) -> &BigUint {
        &self.numerator
    }

    pub fn p_exponent(&self) -> u32 {
        self.p_exponent
    }

    pub fn context(&self) -> PrimeContext {
        self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.numerator.clone()),
            BigInt::from(self.ctx.pow(self.p_exponent)),
        )
    }

    pub fn to_f64(&self) -> f64 {
        let num = self.numerator.to_f64().unwrap_or(f64::INFINITY);
        num / (self.ctx.p as f64).powi(self.p_exponent as i32)
    }

    /// Multiplies by `c * p^shift` (shift may be negative).
    pub fn scale(&self, c: &BigUint, shift: i64) -> Self {
        let e = self.p_exponent as i64 - shift;
        if e >= 0 {
            ExactVolume::new(&self.numerator * c, e as u32, self.ctx)
        } else {
            ExactVolume::new(&self.numerator * c * self.ctx.pow((-e) as u32), 0, self.ctx)
        }
    }

    pub fn mul(&self, other: &ExactVolume) -> Self {
        assert_eq!(self.ctx, other.ctx, "volumes over different primes");
        ExactVolume::new(
            &self.numerator * &other.numerator,
            self.p_exponent + other.p_exponent,
            self.ctx,
        )
    }

    /// `Some(integer)` when the value is integral.
    pub fn as_integer(&self) -> Option<BigUint> {
        (self.p_exponent == 0).then(|| self.numerator.clone())
    }
}

impl PartialOrd for ExactVolume {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactVolume {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = &self.numerator * other.ctx.pow(other.p_exponent);
        let rhs = &other.numerator * self.ctx.pow(self.p_exponent);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for ExactVolume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.numerator, self.ctx.p, self.p_exponent)
    }
}

impl FromStr for ExactVolume {
    type Err = PadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PadicError::MalformedVolume(s.to_string());
        let (m, rest) = s.trim().split_once('/').ok_or_else(bad)?;
        let (p, e) = rest.split_once('^').ok_or_else(bad)?;
        let m: BigUint = m.trim().parse().map_err(|_| bad())?;
        let p: u64 = p.trim().parse().map_err(|_| bad())?;
        let e: u32 = e.trim().parse().map_err(|_| bad())?;
        Ok(ExactVolume::new(m, e, PrimeContext::new(p)?))
    }
}

impl Serialize for ExactVolume {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactVolume {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(p).unwrap()
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(valuation(&BigInt::from(0), ctx(5)), Valuation::Infinity);
        assert_eq!(valuation(&BigInt::from(12), ctx(2)), Valuation::Finite(2));
        assert_eq!(valuation(&BigInt::from(18), ctx(3)), Valuation::Finite(2));
        assert_eq!(valuation(&BigInt::from(-18), ctx(3)), Valuation::Finite(2));
        assert_eq!(valuation_i128(-40, 2), Valuation::Finite(3));
    }

    #[test]
    fn infinity_absorbs_and_dominates() {
        assert_eq!(Valuation::Infinity + Valuation::Finite(3), Valuation::Infinity);
        assert!(Valuation::Infinity > Valuation::Finite(u32::MAX));
        assert!(Valuation::Infinity.at_least(1_000_000));
    }

    #[test]
    fn primality() {
        assert!(PrimeContext::new(1).is_err());
        assert!(PrimeContext::new(9).is_err());
        assert!(PrimeContext::new(2).is_ok());
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
        assert_eq!(primes_up_to(30), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn volumes_normalize_and_print() {
        let v = ExactVolume::new(BigUint::from(3u32), 2, ctx(3));
        assert_eq!(v.to_string(), "1/3^1");
        assert_eq!(ExactVolume::zero(ctx(5)).to_string(), "0/5^0");
        let parsed: ExactVolume = "2/5^1".parse().unwrap();
        assert_eq!(parsed.numerator(), &BigUint::from(2u32));
        assert!("2/6^1".parse::<ExactVolume>().is_err());
        assert!(ExactVolume::p_power(1, ctx(3)) > ExactVolume::new(BigUint::from(2u32), 2, ctx(3)));
    }

    #[test]
    fn stability_precision_is_max_threshold() {
        let x = IntPolynomial::var("x");
        let sys = ConstraintSystem::new(["x"])
            .unwrap()
            .with_constraint(&x * &(&x - &IntPolynomial::constant(1)), 2)
            .unwrap();
        assert_eq!(sys.stability_precision(), 2);
        assert_eq!(ConstraintSystem::new(["x"]).unwrap().stability_precision(), 0);
        let sys = ConstraintSystem::new(["x", "y"])
            .unwrap()
            .with_constraint(x.clone(), 1)
            .unwrap()
            .with_constraint(IntPolynomial::var("y"), 4)
            .unwrap();
        assert_eq!(sys.stability_precision(), 4);
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let err = ConstraintSystem::new(["x"])
            .unwrap()
            .with_constraint(IntPolynomial::var("y"), 1)
            .unwrap_err();
        assert_eq!(err, PadicError::UndeclaredVariable("y".into()));
    }

    #[test]
    fn system_json_round_trip() {
        let x = IntPolynomial::var("x21");
        let sys = ConstraintSystem::new(["x21"])
            .unwrap()
            .with_constraint(&x * &(&x - &IntPolynomial::constant(5)), 1)
            .unwrap();
        let json = sys.to_json();
        assert_eq!(
            json,
            r#"{"variables":["x21"],"constraints":[{"poly":"x21^2 - 5*x21","threshold":1}]}"#
        );
        assert_eq!(ConstraintSystem::from_json(&json).unwrap(), sys);
    }
}

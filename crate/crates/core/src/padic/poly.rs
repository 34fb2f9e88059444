use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// A product of named variables with positive exponents, sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(String, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(name: &str) -> Self {
        Monomial(vec![(name.to_string(), 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn factors(&self) -> &[(String, u32)] {
        &self.0
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<String, u32> = self.0.iter().cloned().collect();
        for (v, e) in &other.0 {
            *map.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(map.into_iter().collect())
    }
}

// Higher degree first, then by factor list.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .degree()
            .cmp(&self.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (v, e)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Integer polynomial in canonical form: no zero coefficients, terms kept
/// in monomial order, so structural equality is polynomial equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntPolynomial {
    terms: BTreeMap<Monomial, BigInt>,
}

impl IntPolynomial {
    pub fn zero() -> Self {
        IntPolynomial::default()
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        let mut p = IntPolynomial::zero();
        p.add_term(Monomial::one(), c.into());
        p
    }

    pub fn var(name: &str) -> Self {
        let mut p = IntPolynomial::zero();
        p.add_term(Monomial::var(name), BigInt::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m).or_insert_with(BigInt::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.retain(|_, c| !c.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigInt)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(v, _)| v.as_str()))
            .collect()
    }

    pub fn evaluate(&self, mut value: impl FnMut(&str) -> BigInt) -> BigInt {
        let mut total = BigInt::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in &m.0 {
                t *= num_traits::pow(value(v), *e as usize);
            }
            total += t;
        }
        total
    }

    /// Coefficients reduced into `[0, modulus)`, vanishing terms dropped.
    pub fn reduce_mod(&self, modulus: &BigInt) -> IntPolynomial {
        let mut out = IntPolynomial::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.mod_floor(modulus));
        }
        out
    }

    pub fn pow(&self, e: u32) -> IntPolynomial {
        let mut acc = IntPolynomial::constant(1);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if m.0.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{abs}*{m}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse polynomial at byte {pos}: {msg}")]
pub struct ParsePolynomialError {
    pos: usize,
    msg: &'static str,
}

impl FromStr for IntPolynomial {
    type Err = ParsePolynomialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        let mut pos = 0;
        let err = |pos, msg| ParsePolynomialError { pos, msg };
        let skip_ws = |pos: &mut usize| {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
        };
        let read_int = |pos: &mut usize| -> Option<BigInt> {
            let start = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            (start < *pos).then(|| s[start..*pos].parse().unwrap())
        };

        let mut poly = IntPolynomial::zero();
        let mut first = true;
        loop {
            skip_ws(&mut pos);
            if pos == bytes.len() {
                if first {
                    return Err(err(pos, "empty polynomial"));
                }
                break;
            }
            let mut sign = BigInt::one();
            match bytes[pos] {
                b'+' if !first => pos += 1,
                b'-' => {
                    sign = -sign;
                    pos += 1;
                }
                _ if !first => return Err(err(pos, "expected `+` or `-`")),
                _ => {}
            }
            first = false;
            let mut coeff = sign;
            let mut mono = Monomial::one();
            loop {
                skip_ws(&mut pos);
                if pos == bytes.len() {
                    return Err(err(pos, "expected a factor"));
                }
                let c = bytes[pos];
                if c.is_ascii_digit() {
                    coeff *= read_int(&mut pos).unwrap();
                } else if c.is_ascii_alphabetic() || c == b'_' {
                    let start = pos;
                    while pos < bytes.len()
                        && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_')
                    {
                        pos += 1;
                    }
                    let name = &s[start..pos];
                    skip_ws(&mut pos);
                    let mut e = 1u32;
                    if pos < bytes.len() && bytes[pos] == b'^' {
                        pos += 1;
                        skip_ws(&mut pos);
                        let v = read_int(&mut pos).ok_or_else(|| err(pos, "expected exponent"))?;
                        e = u32::try_from(v).map_err(|_| err(pos, "exponent too large"))?;
                    }
                    if e > 0 {
                        mono = mono.mul(&Monomial(vec![(name.to_string(), e)]));
                    }
                } else {
                    return Err(err(pos, "unexpected character"));
                }
                skip_ws(&mut pos);
                if pos < bytes.len() && bytes[pos] == b'*' {
                    pos += 1;
                } else {
                    break;
                }
            }
            poly.add_term(mono, coeff);
        }
        Ok(poly)
    }
}

impl Add for &IntPolynomial {
    type Output = IntPolynomial;

    fn add(self, rhs: &IntPolynomial) -> IntPolynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Neg for &IntPolynomial {
    type Output = IntPolynomial;

    fn neg(self) -> IntPolynomial {
        IntPolynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Sub for &IntPolynomial {
    type Output = IntPolynomial;

    fn sub(self, rhs: &IntPolynomial) -> IntPolynomial {
        self + &(-rhs)
    }
}

impl Mul for &IntPolynomial {
    type Output = IntPolynomial;

    fn mul(self, rhs: &IntPolynomial) -> IntPolynomial {
        let mut out = IntPolynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr for IntPolynomial {
            type Output = IntPolynomial;
            fn $f(self, rhs: IntPolynomial) -> IntPolynomial {
                (&self).$f(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

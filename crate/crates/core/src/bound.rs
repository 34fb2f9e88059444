//! Upper bounds of the form `c * p^(a/b)` compared exactly against volumes.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::padic::{ExactVolume, PrimeContext};

/// `coeff * p^(exp_num / exp_den)` with `exp_den >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerBound {
    pub coeff: BigUint,
    pub ctx: PrimeContext,
    pub exp_num: i64,
    pub exp_den: u32,
}

impl PowerBound {
    pub fn new(coeff: impl Into<BigUint>, ctx: PrimeContext, exp_num: i64, exp_den: u32) -> Self {
        assert!(exp_den >= 1);
        let g = exp_num.unsigned_abs().gcd(&(exp_den as u64)).max(1);
        PowerBound {
            coeff: coeff.into(),
            ctx,
            exp_num: exp_num / g as i64,
            exp_den: (exp_den as u64 / g) as u32,
        }
    }

    /// `coeff * p^e` with an integer exponent.
    pub fn integral(coeff: impl Into<BigUint>, ctx: PrimeContext, e: i64) -> Self {
        Self::new(coeff, ctx, e, 1)
    }

    /// Compares `vol` with the bound without leaving the integers: with
    /// `vol = m / p^e`, `vol <= c p^(a/b)` iff `m^b <= c^b p^(a + e b)`.
    pub fn compare(&self, vol: &ExactVolume) -> Ordering {
        assert_eq!(vol.context(), self.ctx, "volume and bound over different primes");
        let b = self.exp_den;
        let lhs = vol.numerator().pow(b);
        let rhs = self.coeff.pow(b);
        let shift = self.exp_num + vol.p_exponent() as i64 * b as i64;
        if shift >= 0 {
            lhs.cmp(&(rhs * self.ctx.pow(shift as u32)))
        } else {
            (lhs * self.ctx.pow((-shift) as u32)).cmp(&rhs)
        }
    }

    pub fn admits(&self, vol: &ExactVolume) -> bool {
        self.compare(vol) != Ordering::Greater
    }

    pub fn to_f64(&self) -> f64 {
        self.coeff.to_f64().unwrap_or(f64::INFINITY)
            * (self.ctx.p() as f64).powf(self.exp_num as f64 / self.exp_den as f64)
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }
}

impl fmt::Display for PowerBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp_den == 1 {
            write!(f, "{}*{}^({})", self.coeff, self.ctx.p(), self.exp_num)
        } else {
            write!(f, "{}*{}^({}/{})", self.coeff, self.ctx.p(), self.exp_num, self.exp_den)
        }
    }
}

impl Serialize for PowerBound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(p).unwrap()
    }

    #[test]
    fn fractional_comparison() {
        // 3/9 against 8 * 3^(-7/6): 3^6 * 3^(-12) vs 8^6 * 3^(-7)
        let b = PowerBound::new(8u32, ctx(3), -7, 6);
        let v = ExactVolume::new(3u32.into(), 2, ctx(3));
        assert!(b.admits(&v));
        assert_eq!(b.to_string(), "8*3^(-7/6)");
        // 2^(-1/2) < 1 = 1/2^0
        let half = PowerBound::new(1u32, ctx(2), -1, 2);
        assert!(!half.admits(&ExactVolume::one(ctx(2))));
        assert!(half.admits(&ExactVolume::new(1u32.into(), 1, ctx(2))));
        // equality counts as admitted
        assert!(PowerBound::integral(2u32, ctx(5), -1).admits(&ExactVolume::new(2u32.into(), 1, ctx(5))));
        assert_eq!(PowerBound::new(1u32, ctx(2), 4, 2).exp_den, 1);
    }

    #[test]
    fn zero_bound_admits_only_zero() {
        let z = PowerBound::integral(0u32, ctx(2), 0);
        assert!(z.admits(&ExactVolume::zero(ctx(2))));
        assert!(!z.admits(&ExactVolume::p_power(9, ctx(2))));
    }
}

//! High-precision reals for zeta values.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigUint;

/// Working precision in bits (about 77 decimal digits).
pub const PRECISION_BITS: usize = 256;

/// Significant digits in printed values.
pub const PRINT_DIGITS: usize = 30;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// A real number carried at [`PRECISION_BITS`] bits.
#[derive(Debug, Clone)]
pub struct HpReal(BigFloat);

impl HpReal {
    pub fn parse(s: &str) -> Option<HpReal> {
        let s = s.trim();
        if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c)) {
            return None;
        }
        let x = with_consts(|cc| BigFloat::parse(s, Radix::Dec, PRECISION_BITS, RM, cc));
        (!x.is_nan()).then_some(HpReal(x))
    }

    pub fn from_u64(x: u64) -> HpReal {
        HpReal(BigFloat::from_u64(x, PRECISION_BITS))
    }

    pub fn from_biguint(x: &BigUint) -> HpReal {
        Self::parse(&x.to_string()).expect("decimal integer parses")
    }

    pub fn zero() -> HpReal {
        Self::from_u64(0)
    }

    pub fn one() -> HpReal {
        Self::from_u64(1)
    }

    pub fn add(&self, o: &HpReal) -> HpReal {
        HpReal(self.0.add(&o.0, PRECISION_BITS, RM))
    }

    pub fn sub(&self, o: &HpReal) -> HpReal {
        HpReal(self.0.sub(&o.0, PRECISION_BITS, RM))
    }

    pub fn mul(&self, o: &HpReal) -> HpReal {
        HpReal(self.0.mul(&o.0, PRECISION_BITS, RM))
    }

    pub fn div(&self, o: &HpReal) -> HpReal {
        HpReal(self.0.div(&o.0, PRECISION_BITS, RM))
    }

    pub fn powi(&self, n: usize) -> HpReal {
        HpReal(self.0.powi(n, PRECISION_BITS, RM))
    }

    pub fn ln(&self) -> HpReal {
        HpReal(with_consts(|cc| self.0.ln(PRECISION_BITS, RM, cc)))
    }

    pub fn exp(&self) -> HpReal {
        HpReal(with_consts(|cc| self.0.exp(PRECISION_BITS, RM, cc)))
    }

    /// `p^x` for a positive integer base.
    pub fn int_pow(p: u64, x: &HpReal) -> HpReal {
        x.mul(&Self::from_u64(p).ln()).exp()
    }

    pub fn to_f64(&self) -> f64 {
        self.to_sig_string(20).parse().unwrap_or(f64::NAN)
    }

    /// Scientific notation with `digits` significant digits, rounded half
    /// up on the decimal expansion.
    pub fn to_sig_string(&self, digits: usize) -> String {
        let raw = with_consts(|cc| self.0.format(Radix::Dec, RM, cc)).unwrap_or_else(|_| "NaN".into());
        round_scientific(&raw, digits).unwrap_or(raw)
    }
}

impl PartialEq for HpReal {
    fn eq(&self, o: &Self) -> bool {
        self.partial_cmp(o) == Some(Ordering::Equal)
    }
}

impl PartialOrd for HpReal {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        self.0.cmp(&o.0).map(|c| c.cmp(&0))
    }
}

impl fmt::Display for HpReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sig_string(PRINT_DIGITS))
    }
}

/// Rounds `d.ddd...e±x` to `digits` significant digits.
fn round_scientific(raw: &str, digits: usize) -> Option<String> {
    let (neg, body) = match raw.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, raw),
    };
    let (mant, exp) = match body.split_once('e') {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (body, 0),
    };
    let mut ds: Vec<u8> = mant.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
    let point = mant.find('.').unwrap_or(mant.len()) as i64;
    // Normalize so the first digit is nonzero.
    let lead = ds.iter().position(|&d| d != 0);
    let Some(lead) = lead else {
        return Some(format!("0.{}e+0", "0".repeat(digits - 1)));
    };
    ds.drain(..lead);
    let mut exp10 = exp + point - 1 - lead as i64;
    ds.resize(ds.len().max(digits + 1), 0);
    let round_up = ds[digits] >= 5;
    ds.truncate(digits);
    if round_up {
        let mut i = digits;
        loop {
            if i == 0 {
                ds.insert(0, 1);
                ds.truncate(digits);
                exp10 += 1;
                break;
            }
            i -= 1;
            if ds[i] == 9 {
                ds[i] = 0;
            } else {
                ds[i] += 1;
                break;
            }
        }
    }
    let text: String = ds.iter().map(|d| (b'0' + d) as char).collect();
    let sign = if neg { "-" } else { "" };
    let esign = if exp10 < 0 { '-' } else { '+' };
    let point = if digits > 1 { "." } else { "" };
    Some(format!("{sign}{}{point}{}e{esign}{}", &text[..1], &text[1..], exp10.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_scientific("1.23456e+3", 3).unwrap(), "1.23e+3");
        assert_eq!(round_scientific("9.996e-1", 3).unwrap(), "1.00e+0");
        assert_eq!(round_scientific("-2.5e+0", 1).unwrap(), "-3e+0");
        assert_eq!(round_scientific("0.0", 3).unwrap(), "0.00e+0");
    }

    #[test]
    fn arithmetic_and_printing() {
        let ln2 = HpReal::from_u64(2).ln();
        assert_eq!(ln2.to_string(), "6.93147180559945309417232121458e-1");
        let quarter = HpReal::int_pow(2, &HpReal::parse("-2").unwrap());
        assert_eq!(quarter.to_string(), "2.50000000000000000000000000000e-1");
        assert!(HpReal::parse("abc").is_none());
        assert!((HpReal::parse("1.5").unwrap().to_f64() - 1.5).abs() < 1e-15);
        assert!(HpReal::one() < HpReal::from_u64(2));
    }
}

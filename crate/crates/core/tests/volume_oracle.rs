//! The digit search against a brute-force residue count over small boxes.

use num_bigint::BigUint;
use proptest::prelude::*;
use subring_core::padic::{solution_volume, ConstraintSystem, ExactVolume, IntPolynomial, PrimeContext, DEFAULT_BUDGET};

const VARS: [&str; 3] = ["x", "y", "z"];

/// A polynomial as `(coeff, exponents per variable)` terms, evaluated here
/// in plain integers so the oracle shares nothing with the library.
#[derive(Debug, Clone)]
struct Poly {
    terms: Vec<(i64, [u32; 3])>,
}

impl Poly {
    fn eval(&self, vals: &[i128]) -> i128 {
        self.terms
            .iter()
            .map(|(c, e)| {
                let mut t = *c as i128;
                for (v, &k) in vals.iter().zip(e) {
                    t *= v.pow(k);
                }
                t
            })
            .sum()
    }

    fn to_poly(&self, nvars: usize) -> IntPolynomial {
        let mut out = IntPolynomial::zero();
        for (c, e) in &self.terms {
            let mut t = IntPolynomial::constant(*c);
            for (i, &k) in e.iter().enumerate().take(nvars) {
                t = &t * &IntPolynomial::var(VARS[i]).pow(k);
            }
            out = &out + &t;
        }
        out
    }
}

fn divides(p: u64, t: u32, x: i128) -> bool {
    x.rem_euclid((p as i128).pow(t)) == 0
}

/// Fraction of the `p^prec` box satisfying every constraint.
fn brute_force(p: u64, nvars: usize, prec: u32, cons: &[(Poly, u32)]) -> ExactVolume {
    let m = p.pow(prec) as i128;
    let total = m.pow(nvars as u32);
    let mut hits = 0u64;
    for code in 0..total {
        let mut vals = [0i128; 3];
        let mut c = code;
        for v in vals.iter_mut().take(nvars) {
            *v = c % m;
            c /= m;
        }
        if cons.iter().all(|(f, t)| divides(p, *t, f.eval(&vals[..nvars]))) {
            hits += 1;
        }
    }
    ExactVolume::new(BigUint::from(hits), prec * nvars as u32, PrimeContext::new(p).unwrap())
}

fn poly_strategy(nvars: usize) -> impl Strategy<Value = Poly> {
    prop::collection::vec(
        (-6i64..=6, prop::array::uniform3(0u32..=2)).prop_map(move |(c, mut e)| {
            for x in e.iter_mut().skip(nvars) {
                *x = 0;
            }
            (c, e)
        }),
        1..=3,
    )
    .prop_map(|terms| Poly { terms })
}

fn case_strategy() -> impl Strategy<Value = (u64, usize, Vec<(Poly, u32)>)> {
    (prop::sample::select(vec![2u64, 3, 5]), 1usize..=3).prop_flat_map(|(p, nvars)| {
        // keep the box at most p^12 and tiny in absolute size
        let max_t: u32 = match (p, nvars) {
            (2, 1) => 8,
            (2, 2) => 5,
            (2, _) => 3,
            (3, 1) => 5,
            (3, 2) => 3,
            (3, _) => 2,
            (_, 1) => 3,
            (_, 2) => 2,
            _ => 1,
        };
        let cons = prop::collection::vec((poly_strategy(nvars), 0..=max_t), 1..=2);
        (Just(p), Just(nvars), cons)
    })
}

fn system(nvars: usize, cons: &[(Poly, u32)]) -> ConstraintSystem {
    let mut sys = ConstraintSystem::new(VARS[..nvars].iter().copied()).unwrap();
    for (f, t) in cons {
        sys.add_constraint(f.to_poly(nvars), *t).unwrap();
    }
    sys
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn digit_search_matches_brute_force((p, nvars, cons) in case_strategy()) {
        let sys = system(nvars, &cons);
        let ctx = PrimeContext::new(p).unwrap();
        let got = solution_volume(&sys, ctx, DEFAULT_BUDGET).unwrap();
        let prec = cons.iter().map(|c| c.1).max().unwrap();
        prop_assert_eq!(&got, &brute_force(p, nvars, prec, &cons));
        // counting at one more digit changes nothing
        if (p as u128).pow((prec + 1) * nvars as u32) <= 1 << 14 {
            prop_assert_eq!(&got, &brute_force(p, nvars, prec + 1, &cons));
        }
    }

    #[test]
    fn extra_constraints_never_grow_the_set((p, nvars, cons) in case_strategy()) {
        let ctx = PrimeContext::new(p).unwrap();
        let first = solution_volume(&system(nvars, &cons[..1]), ctx, DEFAULT_BUDGET).unwrap();
        let all = solution_volume(&system(nvars, &cons), ctx, DEFAULT_BUDGET).unwrap();
        prop_assert!(all <= first);
    }
}

#[test]
fn documented_volumes() {
    let ctx = |p| PrimeContext::new(p).unwrap();
    let vol = |s: &str, t, p| {
        let sys = ConstraintSystem::new(["x"]).unwrap().with_constraint(s.parse().unwrap(), t).unwrap();
        solution_volume(&sys, ctx(p), DEFAULT_BUDGET).unwrap().to_string()
    };
    assert_eq!(vol("x", 1, 3), "1/3^1");
    assert_eq!(vol("x^2 - x", 2, 3), "2/3^2");
    assert_eq!(vol("x^2", 3, 2), "1/2^2");
    assert_eq!(vol("7", 1, 7), "1/7^0");
    assert_eq!(vol("1", 1, 7), "0/7^0");
}

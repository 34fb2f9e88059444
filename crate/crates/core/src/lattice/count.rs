//! Exact counts of multiplicative sublattices and subrings.
//!
//! The counter fills a matrix row by row, each row from its last
//! below-diagonal entry to its first. For row `m` and each earlier row `i`,
//! the product `v_i * v_m` must lie in the span of rows `0..=i`; its
//! back-substitution coefficient for column `c` is known as soon as entries
//! `c..` of row `m` are, so a bad partial row is cut off immediately.
//! Residuals are kept modulo the index `N`, which is harmless because
//! `N * Z^n` lies inside every lattice of index `N`.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{enumerate_hnf, LatticeError};

/// Default ceiling on search nodes per counting call.
pub const DEFAULT_CEILING: u64 = 10_000_000;

/// Largest dimension the counter handles.
pub const MAX_DIMENSION: usize = 6;

const FLUSH_EVERY: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    /// Multiplicative sublattices, `t_n(k)`.
    MultiplicativeLattices,
    /// Subrings, `f_n(k)`.
    Subrings,
    /// Local coefficient `a_n(k; p)`, indexed by the exponent `k`.
    LocalCoefficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DirectEnumeration,
    VolumeIdentity,
    Duality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub n: usize,
    pub k: u64,
    #[serde(with = "decimal")]
    pub value: BigUint,
    pub kind: CountKind,
    pub provenance: Provenance,
}

mod decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// All ordered ways to write `k` as a product of `n` positive factors.
pub fn ordered_factorizations(k: u64, n: usize) -> Vec<Vec<u64>> {
    fn go(k: u64, slots: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        let mut d = 1;
        while d * d <= k {
            if k.is_multiple_of(d) {
                for f in [d, k / d] {
                    prefix.push(f);
                    go(k / f, slots - 1, prefix, out);
                    prefix.pop();
                    if d * d == k {
                        break;
                    }
                }
            }
            d += 1;
        }
    }
    let mut out = Vec::new();
    if n > 0 && k > 0 {
        go(k, n, &mut Vec::with_capacity(n), &mut out);
    }
    out.sort();
    out
}

type Residues = [[i64; MAX_DIMENSION]; MAX_DIMENSION];

struct Search<'a> {
    n: usize,
    diag: [i64; MAX_DIMENSION],
    modulus: i128,
    rows: Residues,
    subrings: bool,
    local_nodes: u64,
    nodes: &'a AtomicU64,
    ceiling: u64,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<(), ()> {
        self.local_nodes += 1;
        if self.local_nodes == FLUSH_EVERY {
            self.local_nodes = 0;
            let seen = self.nodes.fetch_add(FLUSH_EVERY, Ordering::Relaxed) + FLUSH_EVERY;
            if seen > self.ceiling {
                return Err(());
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), ()> {
        let seen = self.nodes.fetch_add(self.local_nodes, Ordering::Relaxed) + self.local_nodes;
        self.local_nodes = 0;
        if seen > self.ceiling {
            Err(())
        } else {
            Ok(())
        }
    }

    #[inline]
    fn reduce(&self, v: i128) -> i64 {
        v.rem_euclid(self.modulus) as i64
    }

    fn contains_ones(&self) -> bool {
        let n = self.n;
        let mut rest = [1i64; MAX_DIMENSION];
        for c in (0..n).rev() {
            let val = rest[c] as i128;
            let d = self.diag[c] as i128;
            if val % d != 0 {
                return false;
            }
            let alpha = val / d;
            for j in 0..c {
                rest[j] = self.reduce(rest[j] as i128 - alpha * self.rows[c][j] as i128);
            }
        }
        true
    }

    fn row(&mut self, m: usize) -> Result<u64, ()> {
        if m == self.n {
            return Ok(u64::from(!self.subrings || self.contains_ones()));
        }
        if m == 0 {
            return self.row(1);
        }
        self.column(m, m - 1, [[0; MAX_DIMENSION]; MAX_DIMENSION])
    }

    /// `corr[i][c]` is the pending residual in column `c` of `v_i * v_m`.
    fn column(&mut self, m: usize, c: usize, corr: Residues) -> Result<u64, ()> {
        let dc = self.diag[c];
        let dm = self.diag[m] as i128;
        let mut total = 0;
        for x in 0..dc {
            self.tick()?;
            self.rows[m][c] = x;
            let x = x as i128;
            let mut st = corr;
            let mut ok = true;
            for i in (c + 1)..=m {
                let w = if i < m {
                    self.rows[i][c] as i128 * x
                } else {
                    // alpha_m = d_m contributes -d_m * x_mc here.
                    x * x - dm * x
                };
                let val = self.reduce(w + st[i][c] as i128) as i128;
                if val % dc as i128 != 0 {
                    ok = false;
                    break;
                }
                let alpha = val / dc as i128;
                if alpha != 0 {
                    for j in 0..c {
                        st[i][j] = self.reduce(st[i][j] as i128 - alpha * self.rows[c][j] as i128);
                    }
                }
            }
            if !ok {
                continue;
            }
            // v_c * v_m starts at column c with coefficient x_mc.
            if c >= 1 && x != 0 {
                for j in 0..c {
                    st[c][j] = self.reduce(-x * self.rows[c][j] as i128);
                }
            }
            total += if c == 0 {
                self.row(m + 1)?
            } else {
                self.column(m, c - 1, st)?
            };
        }
        self.rows[m][c] = 0;
        Ok(total)
    }
}

fn check_dimension(n: usize) -> Result<(), LatticeError> {
    if n == 0 || n > MAX_DIMENSION {
        return Err(LatticeError::InvalidArgument(format!(
            "dimension {n} outside 1..={MAX_DIMENSION}"
        )));
    }
    Ok(())
}

fn count_diagonal(
    diag: &[u64],
    subrings: bool,
    nodes: &AtomicU64,
    ceiling: u64,
) -> Result<u64, ()> {
    let n = diag.len();
    if subrings && diag[n - 1] != 1 {
        // The last coordinate of (1, ..., 1) forces the last diagonal to 1.
        return Ok(0);
    }
    let mut d = [1i64; MAX_DIMENSION];
    let mut modulus: i128 = 1;
    for (slot, &x) in d.iter_mut().zip(diag) {
        *slot = x as i64;
        modulus *= x as i128;
    }
    let mut rows = [[0i64; MAX_DIMENSION]; MAX_DIMENSION];
    for i in 0..n {
        rows[i][i] = d[i];
    }
    let mut s = Search {
        n,
        diag: d,
        modulus,
        rows,
        subrings,
        local_nodes: 0,
        nodes,
        ceiling,
    };
    let count = s.row(0)?;
    s.flush()?;
    Ok(count)
}

fn check_index(n: usize, k: u64) -> Result<(), LatticeError> {
    check_dimension(n)?;
    if k == 0 {
        return Err(LatticeError::InvalidArgument("index must be positive".into()));
    }
    if k > (1u64 << 31) {
        return Err(LatticeError::InvalidArgument(format!(
            "index {k} too large for the counter"
        )));
    }
    Ok(())
}

/// Multiplicative matrices (or subrings) with a fixed diagonal.
pub fn count_fixed_diagonal(diag: &[u64], subrings: bool, ceiling: u64) -> Result<u64, LatticeError> {
    let k: u64 = diag.iter().product();
    check_index(diag.len(), k)?;
    let nodes = AtomicU64::new(0);
    count_diagonal(diag, subrings, &nodes, ceiling).map_err(|_| LatticeError::ResourceLimit {
        n: diag.len(),
        k,
        ceiling,
    })
}

fn count_index(n: usize, k: u64, subrings: bool, ceiling: u64) -> Result<u64, LatticeError> {
    check_index(n, k)?;
    let nodes = AtomicU64::new(0);
    let parts: Vec<Result<u64, ()>> = ordered_factorizations(k, n)
        .par_iter()
        .map(|diag| count_diagonal(diag, subrings, &nodes, ceiling))
        .collect();
    let mut total = 0u64;
    for part in parts {
        total += part.map_err(|_| LatticeError::ResourceLimit { n, k, ceiling })?;
    }
    Ok(total)
}

/// Literal filter of the full enumeration through the exact closure tests.
pub fn count_hnf_by_filtering(n: usize, k: u64, kind: CountKind) -> u64 {
    let keep: fn(&super::HnfMatrix) -> bool = match kind {
        CountKind::Subrings => super::HnfMatrix::is_subring,
        _ => super::HnfMatrix::is_multiplicative,
    };
    enumerate_hnf(n, k).filter(keep).count() as u64
}

/// `t_n(k)`: multiplicative sublattices of `Z^n` of index `k`.
pub fn t_count(n: usize, k: u64, ceiling: u64) -> Result<CountRecord, LatticeError> {
    let value = count_index(n, k, false, ceiling)?;
    Ok(CountRecord {
        n,
        k,
        value: value.into(),
        kind: CountKind::MultiplicativeLattices,
        provenance: Provenance::DirectEnumeration,
    })
}

/// `f_n(k)`: subrings of `Z^n` of index `k`, counted directly and checked
/// against `t_(n-1)(k)`.
pub fn f_count(n: usize, k: u64, ceiling: u64) -> Result<CountRecord, LatticeError> {
    if n < 2 {
        return Err(LatticeError::InvalidArgument(
            "subring counts need dimension at least 2".into(),
        ));
    }
    let direct = count_index(n, k, true, ceiling)?;
    let dual = count_index(n - 1, k, false, ceiling)?;
    if direct != dual {
        return Err(LatticeError::DualityMismatch {
            n,
            k,
            direct: direct.to_string(),
            dual: dual.to_string(),
        });
    }
    Ok(CountRecord {
        n,
        k,
        value: direct.into(),
        kind: CountKind::Subrings,
        provenance: Provenance::DirectEnumeration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, k: u64) -> u64 {
        t_count(n, k, DEFAULT_CEILING).unwrap().value.try_into().unwrap()
    }

    #[test]
    fn factorizations() {
        assert_eq!(ordered_factorizations(6, 2), vec![vec![1, 6], vec![2, 3], vec![3, 2], vec![6, 1]]);
        assert_eq!(ordered_factorizations(1, 3), vec![vec![1, 1, 1]]);
        assert_eq!(ordered_factorizations(4, 3).len(), 6);
    }

    #[test]
    fn small_counts() {
        for k in 1..=20 {
            assert_eq!(t(1, k), 1);
        }
        for p in [2, 3, 5, 7] {
            assert_eq!(t(2, p), 3);
        }
        assert_eq!(t(2, 4), 4);
        let f = f_count(3, 4, DEFAULT_CEILING).unwrap();
        assert_eq!(f.value, BigUint::from(4u32));
        assert_eq!(f_count(4, 1, DEFAULT_CEILING).unwrap().value, BigUint::from(1u32));
    }

    #[test]
    fn pruned_counter_matches_filtering() {
        for n in 1..=4 {
            for k in 1..=12 {
                if n == 4 && k > 8 {
                    continue;
                }
                assert_eq!(
                    t(n, k),
                    count_hnf_by_filtering(n, k, CountKind::MultiplicativeLattices),
                    "t_{n}({k})"
                );
                if n >= 2 {
                    let f = count_index(n, k, true, DEFAULT_CEILING).unwrap();
                    assert_eq!(f, count_hnf_by_filtering(n, k, CountKind::Subrings), "f_{n}({k})");
                }
            }
        }
    }

    #[test]
    fn ceiling_is_enforced() {
        let err = t_count(4, 64, 100).unwrap_err();
        assert_eq!(err, LatticeError::ResourceLimit { n: 4, k: 64, ceiling: 100 });
    }

    #[test]
    fn record_serializes_value_as_string() {
        let r = t_count(2, 4, DEFAULT_CEILING).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"n":2,"k":4,"value":"4","kind":"multiplicative_lattices","provenance":"direct-enumeration"}"#
        );
    }
}

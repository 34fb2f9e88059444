//! Sublattices of `Z^n` in Hermite normal form, closure tests and counts.
//!
//! Convention: lower-triangular generator matrices whose rows span the
//! lattice, with every below-diagonal entry reduced modulo the diagonal entry
//! of its column. Each finite-index sublattice has exactly one such matrix.

mod count;
mod partial;

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

pub use count::{
    count_fixed_diagonal, count_hnf_by_filtering, f_count, ordered_factorizations, t_count,
    CountKind, CountRecord, Provenance, DEFAULT_CEILING, MAX_DIMENSION,
};
pub use partial::{f_values, n_partial, CountCache, PartialSums};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration for n={n}, k={k} exceeds the ceiling of {ceiling} nodes")]
    ResourceLimit { n: usize, k: u64, ceiling: u64 },
    #[error("duality mismatch at n={n}, k={k}: direct {direct}, dual {dual}")]
    DualityMismatch {
        n: usize,
        k: u64,
        direct: String,
        dual: String,
    },
    #[error("multiplicativity mismatch at k={k}: direct {direct}, product {product}")]
    MultiplicativityMismatch {
        k: u64,
        direct: String,
        product: String,
    },
    #[error("count cache: {0}")]
    Cache(String),
}

/// A lower-triangular matrix in column-reduced Hermite normal form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct HnfMatrix {
    n: usize,
    entries: Vec<u64>,
}

impl HnfMatrix {
    /// Builds from row-major entries, checking the normal form.
    pub fn new(n: usize, entries: Vec<u64>) -> Result<Self, LatticeError> {
        if n == 0 || entries.len() != n * n {
            return Err(LatticeError::InvalidArgument(format!(
                "expected {} entries for dimension {n}",
                n * n
            )));
        }
        for i in 0..n {
            let d = entries[i * n + i];
            if d == 0 {
                return Err(LatticeError::InvalidArgument(format!(
                    "diagonal entry {i} is zero"
                )));
            }
            for j in 0..n {
                let x = entries[i * n + j];
                if j > i && x != 0 {
                    return Err(LatticeError::InvalidArgument(format!(
                        "entry ({i},{j}) above the diagonal"
                    )));
                }
                if j < i && x >= entries[j * n + j] {
                    return Err(LatticeError::InvalidArgument(format!(
                        "entry ({i},{j}) not reduced modulo its column's diagonal"
                    )));
                }
            }
        }
        Ok(HnfMatrix { n, entries })
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self, LatticeError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LatticeError::InvalidArgument("matrix is not square".into()));
        }
        Self::new(n, rows.into_iter().flatten().collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1;
        }
        HnfMatrix { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry in row `i`, column `j` (0-based).
    pub fn entry(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    /// Index of the generated lattice, the product of the diagonal.
    pub fn index(&self) -> u128 {
        self.diagonal().iter().map(|&d| d as u128).product()
    }

    /// Whether `w` lies in the row lattice. Back-substitutes from the last
    /// column, stopping at the first non-integral coefficient.
    pub fn contains(&self, w: &[BigInt]) -> bool {
        assert_eq!(w.len(), self.n);
        let mut rest: Vec<BigInt> = w.to_vec();
        for c in (0..self.n).rev() {
            let d = BigInt::from(self.entry(c, c));
            let (alpha, rem) = rest[c].div_rem(&d);
            if !rem.is_zero() {
                return false;
            }
            if alpha.is_zero() {
                continue;
            }
            for (j, slot) in rest.iter_mut().enumerate().take(c) {
                *slot -= &alpha * self.entry(c, j);
            }
        }
        true
    }

    fn product_row(&self, j: usize, k: usize) -> Vec<BigInt> {
        self.row(j)
            .iter()
            .zip(self.row(k))
            .map(|(&a, &b)| BigInt::from(a) * b)
            .collect()
    }

    /// Closure of the lattice under componentwise multiplication.
    pub fn is_multiplicative(&self) -> bool {
        (0..self.n).all(|j| (j..self.n).all(|k| self.contains(&self.product_row(j, k))))
    }

    /// Multiplicative and containing `(1, ..., 1)`.
    pub fn is_subring(&self) -> bool {
        let ones = vec![BigInt::one(); self.n];
        self.contains(&ones) && self.is_multiplicative()
    }
}

impl TryFrom<Vec<Vec<u64>>> for HnfMatrix {
    type Error = LatticeError;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self, LatticeError> {
        HnfMatrix::from_rows(rows)
    }
}

impl From<HnfMatrix> for Vec<Vec<u64>> {
    fn from(m: HnfMatrix) -> Self {
        (0..m.n).map(|i| m.row(i).to_vec()).collect()
    }
}

impl fmt::Display for HnfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// Every sublattice of `Z^n` of the given index, each exactly once.
pub fn enumerate_hnf(n: usize, index: u64) -> HnfIter {
    assert!(n >= 1 && index >= 1, "dimension and index must be positive");
    HnfIter {
        n,
        diagonals: ordered_factorizations(index, n),
        current: 0,
        fill: None,
    }
}

/// Iterator over diagonal factorizations and, for each, all reduced fillings.
pub struct HnfIter {
    n: usize,
    diagonals: Vec<Vec<u64>>,
    current: usize,
    /// Mixed-radix counter over the below-diagonal entries.
    fill: Option<Vec<u64>>,
}

impl HnfIter {
    fn build(&self, diag: &[u64], fill: &[u64]) -> HnfMatrix {
        let n = self.n;
        let mut entries = vec![0; n * n];
        let mut t = 0;
        for i in 0..n {
            entries[i * n + i] = diag[i];
            for j in 0..i {
                entries[i * n + j] = fill[t];
                t += 1;
            }
        }
        HnfMatrix { n, entries }
    }
}

impl Iterator for HnfIter {
    type Item = HnfMatrix;

    fn next(&mut self) -> Option<HnfMatrix> {
        let n = self.n;
        let slots = n * (n - 1) / 2;
        loop {
            let diag = self.diagonals.get(self.current)?.clone();
            match self.fill.take() {
                None => {
                    let fill = vec![0; slots];
                    let m = self.build(&diag, &fill);
                    self.fill = Some(fill);
                    return Some(m);
                }
                Some(mut fill) => {
                    // Radix of slot t is the diagonal of its column.
                    let radices: Vec<u64> = (0..n).flat_map(|i| diag[..i].to_vec()).collect();
                    let mut t = slots;
                    let advanced = loop {
                        if t == 0 {
                            break false;
                        }
                        t -= 1;
                        fill[t] += 1;
                        if fill[t] < radices[t] {
                            break true;
                        }
                        fill[t] = 0;
                    };
                    if advanced {
                        let m = self.build(&diag, &fill);
                        self.fill = Some(fill);
                        return Some(m);
                    }
                    self.current += 1;
                }
            }
        }
    }
}

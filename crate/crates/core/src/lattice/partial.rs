//! Partial sums `N_n(B) = f_n(1) + ... + f_n(B)` via multiplicativity.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use num_bigint::BigUint;
use rayon::prelude::*;

use super::count::{f_count, t_count};
use super::LatticeError;

/// Persistent memo of subring counts at prime powers, keyed `"n:p:e"`.
#[derive(Debug, Default)]
pub struct CountCache {
    path: Option<PathBuf>,
    table: Mutex<BTreeMap<String, String>>,
}

impl CountCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file, starting empty when it does not exist yet.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LatticeError> {
        let path = path.as_ref().to_path_buf();
        let table = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| LatticeError::Cache(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(LatticeError::Cache(format!("{}: {e}", path.display()))),
        };
        Ok(CountCache {
            path: Some(path),
            table: Mutex::new(table),
        })
    }

    fn key(n: usize, p: u64, e: u32) -> String {
        format!("{n}:{p}:{e}")
    }

    pub fn get(&self, n: usize, p: u64, e: u32) -> Option<BigUint> {
        let table = self.table.lock().expect("cache lock");
        table.get(&Self::key(n, p, e)).and_then(|s| s.parse().ok())
    }

    pub fn insert(&self, n: usize, p: u64, e: u32, value: &BigUint) {
        let mut table = self.table.lock().expect("cache lock");
        table.insert(Self::key(n, p, e), value.to_string());
    }

    pub fn len(&self) -> usize {
        self.table.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the table through a temporary file and a rename, so readers
    /// never observe a half-written cache.
    pub fn save(&self) -> Result<(), LatticeError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let text = {
            let table = self.table.lock().expect("cache lock");
            serde_json::to_string_pretty(&*table).expect("string map serializes")
        };
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let io = |e: std::io::Error| LatticeError::Cache(format!("{}: {e}", path.display()));
        if let Some(dir) = dir {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

/// Values `f_n(k)` for `k <= bound` and their running sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSums {
    pub n: usize,
    /// `values[k] = f_n(k)`, with `values[0] = 0`.
    pub values: Vec<u128>,
    /// `cumulative[k] = N_n(k)`.
    pub cumulative: Vec<u128>,
}

impl PartialSums {
    pub fn bound(&self) -> u64 {
        (self.values.len() - 1) as u64
    }

    pub fn at(&self, b: u64) -> BigUint {
        BigUint::from(self.cumulative[b as usize])
    }

    /// `(k, N_n(k))` for every `k` up to the bound.
    pub fn pairs(&self) -> impl Iterator<Item = (u64, BigUint)> + '_ {
        (1..self.cumulative.len()).map(|k| (k as u64, BigUint::from(self.cumulative[k])))
    }
}

fn smallest_prime_factors(bound: usize) -> Vec<u32> {
    let mut spf = vec![0u32; bound + 1];
    for i in 2..=bound {
        if spf[i] == 0 {
            for j in (i..=bound).step_by(i) {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
            }
        }
    }
    spf
}

/// Largest composite index at which the product rule is re-checked directly.
fn spot_limit(n: usize) -> u64 {
    match n {
        0..=3 => 60,
        4 => 30,
        _ => 12,
    }
}

/// `f_n(k)` for all `k <= bound`.
///
/// Prime-power values come from `t_(n-1)(p^e)` (the subring/multiplicative
/// duality), memoized in `cache`. Composite values use multiplicativity,
/// which is re-checked against direct subring counts at small composites,
/// as is the duality at small prime powers.
pub fn f_values(
    n: usize,
    bound: u64,
    ceiling: u64,
    cache: &CountCache,
) -> Result<PartialSums, LatticeError> {
    if !(2..=5).contains(&n) {
        return Err(LatticeError::InvalidArgument(format!(
            "partial sums are supported for n in 2..=5, got {n}"
        )));
    }
    if bound == 0 {
        return Err(LatticeError::InvalidArgument("bound must be positive".into()));
    }
    let b = bound as usize;
    let spf = smallest_prime_factors(b);

    let mut prime_powers = Vec::new();
    for p in 2..=b {
        if spf[p] as usize == p {
            let (mut q, mut e) = (p as u64, 1u32);
            while q <= bound {
                prime_powers.push((p as u64, e, q));
                q = q.saturating_mul(p as u64);
                e += 1;
            }
        }
    }
    let missing: Vec<(u64, u32, u64)> = prime_powers
        .iter()
        .copied()
        .filter(|&(p, e, _)| cache.get(n, p, e).is_none())
        .collect();
    let computed: Vec<Result<(u64, u32, BigUint), LatticeError>> = missing
        .par_iter()
        .map(|&(p, e, q)| {
            let rec = t_count(n - 1, q, ceiling)?;
            Ok((p, e, rec.value))
        })
        .collect();
    for r in computed {
        let (p, e, v) = r?;
        cache.insert(n, p, e, &v);
    }

    let mut values = vec![0u128; b + 1];
    values[1] = 1;
    for &(p, e, q) in &prime_powers {
        let v = cache.get(n, p, e).expect("filled above");
        values[q as usize] = u128::try_from(v).expect("count fits in 128 bits");
    }
    for k in 2..=b {
        let p = spf[k] as usize;
        let mut pe = p;
        while (k / pe).is_multiple_of(p) {
            pe *= p;
        }
        if pe != k {
            values[k] = values[pe] * values[k / pe];
        }
    }

    let limit = spot_limit(n).min(bound);
    for k in 2..=limit {
        let direct = f_count(n, k, ceiling)?.value;
        if direct != BigUint::from(values[k as usize]) {
            return Err(LatticeError::MultiplicativityMismatch {
                k,
                direct: direct.to_string(),
                product: values[k as usize].to_string(),
            });
        }
    }

    let mut cumulative = vec![0u128; b + 1];
    for k in 1..=b {
        cumulative[k] = cumulative[k - 1] + values[k];
    }
    Ok(PartialSums {
        n,
        values,
        cumulative,
    })
}

/// `(k, N_n(k))` for `k = 1..=bound`.
pub fn n_partial(
    n: usize,
    bound: u64,
    ceiling: u64,
    cache: &CountCache,
) -> Result<Vec<(u64, BigUint)>, LatticeError> {
    Ok(f_values(n, bound, ceiling, cache)?.pairs().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_CEILING;

    #[test]
    fn small_partial_sums() {
        let cache = CountCache::in_memory();
        let sums = f_values(3, 6, DEFAULT_CEILING, &cache).unwrap();
        assert_eq!(sums.at(1), BigUint::from(1u32));
        assert_eq!(sums.at(4), BigUint::from(11u32));
        assert_eq!(sums.cumulative[6], sums.cumulative[5] + sums.values[2] * sums.values[3]);
        assert!(!cache.is_empty());
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.json");
        let cache = CountCache::open(&path).unwrap();
        let first = n_partial(3, 30, DEFAULT_CEILING, &cache).unwrap();
        cache.save().unwrap();
        let reopened = CountCache::open(&path).unwrap();
        assert_eq!(reopened.len(), cache.len());
        assert_eq!(reopened.get(3, 2, 2), Some(BigUint::from(4u32)));
        assert_eq!(n_partial(3, 30, DEFAULT_CEILING, &reopened).unwrap(), first);
    }

    #[test]
    fn rejects_unsupported_dimension() {
        let cache = CountCache::in_memory();
        assert!(f_values(6, 10, DEFAULT_CEILING, &cache).is_err());
        assert!(f_values(3, 0, DEFAULT_CEILING, &cache).is_err());
    }
}

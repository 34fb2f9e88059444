//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria (11 then
//! reruns whichever of 3, 5 and 6 were selected). The process exits 0 after
//! reporting unless `ACCEPTANCE_STRICT=1`, in which case any FAIL exits 1.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_integer::Integer;
use serde::Serialize;
use subring_core::domains::{
    coefficient_identity, compositions, equivalence_check, fiber_ratio_check, DiagonalProfile,
};
use subring_core::lattice::{count_hnf_by_filtering, f_count, n_partial, t_count, CountCache, CountKind, DEFAULT_CEILING};
use subring_core::lemmas::{lemma_audit, GridSpec};
use subring_core::padic::{PrimeContext, DEFAULT_BUDGET};
use subring_core::zeta::{asympt_fit, asympt_fit_points, bound_audit, BoundGrid};

/// Largest relative residual tolerated at the growth checkpoints.
const GROWTH_RESIDUAL_LIMIT: f64 = 0.10;
/// Relative coefficient error tolerated on planted fits.
const PLANTED_FIT_TOLERANCE: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ctx(p: u64) -> PrimeContext {
    PrimeContext::new(p).expect("prime")
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable report")
}

fn c1() -> Outcome {
    let mut bad = Vec::new();
    for (n, want) in [(3usize, 3u32), (4, 6), (5, 10)] {
        for p in [2u64, 3, 5, 7] {
            let want = BigUint::from(want);
            let direct = f_count(n, p, DEFAULT_CEILING).map(|r| r.value);
            let filtered = BigUint::from(count_hnf_by_filtering(n, p, CountKind::Subrings));
            let dual = t_count(n - 1, p, DEFAULT_CEILING).map(|r| r.value);
            if direct.as_ref().ok() != Some(&want) || filtered != want || dual.as_ref().ok() != Some(&want) {
                bad.push(format!("n={n} p={p}: direct {direct:?} filtered {filtered} dual {dual:?}"));
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() { "12 values exact".into() } else { bad.join("; ") },
    }
}

fn c2() -> Outcome {
    let bad: Vec<u64> = (1..=50u64)
        .filter(|&k| t_count(1, k, DEFAULT_CEILING).map(|r| r.value) != Ok(BigUint::from(1u32)))
        .collect();
    Outcome {
        pass: bad.is_empty(),
        detail: format!("k <= 50, {} mismatches {bad:?}", bad.len()),
    }
}

fn c3_report() -> Result<String, String> {
    let mut rows = Vec::new();
    for (n, k_max) in [(2usize, 4u32), (3, 3), (4, 2)] {
        for p in [2u64, 3, 5] {
            for k in 1..=k_max {
                rows.push(coefficient_identity(n, k, ctx(p), DEFAULT_BUDGET, DEFAULT_CEILING).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(to_json(&rows))
}

fn c3(report: &Result<String, String>) -> Outcome {
    match report {
        Err(e) => Outcome { pass: false, detail: e.clone() },
        Ok(json) => {
            let rows: Vec<serde_json::Value> = serde_json::from_str(json).unwrap();
            let bad: Vec<String> = rows
                .iter()
                .filter(|r| r["pass"] != true)
                .map(|r| format!("n={} k={} p={}: {} vs {}", r["n"], r["k"], r["p"], r["from_volumes"], r["direct"]))
                .collect();
            Outcome {
                pass: bad.is_empty(),
                detail: format!("{} cases, {} mismatches {}", rows.len(), bad.len(), bad.join("; ")),
            }
        }
    }
}

fn c4() -> Outcome {
    let (mut profiles, mut points, mut mismatches) = (0u64, 0u64, 0u64);
    let mut bad = Vec::new();
    for n in 2..=4usize {
        for p in [2u64, 3] {
            for total in 0..=3u32 {
                for e in compositions(total, n) {
                    match equivalence_check(&DiagonalProfile::new(e.clone(), ctx(p)), u64::MAX) {
                        Ok(r) => {
                            profiles += 1;
                            points += r.points;
                            mismatches += r.mismatches;
                            if r.mismatches > 0 {
                                bad.push(format!("n={n} p={p} {e:?}: {} at {:?}", r.mismatches, r.first_mismatch));
                            }
                        }
                        Err(err) => bad.push(format!("n={n} p={p} {e:?}: {err}")),
                    }
                }
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{profiles} profiles, {points} residue points, {mismatches} mismatches {}", bad.join("; ")),
    }
}

fn c5_report() -> String {
    to_json(&lemma_audit(&GridSpec::standard(), DEFAULT_BUDGET))
}

fn c5(json: &str) -> Outcome {
    let r: serde_json::Value = serde_json::from_str(json).unwrap();
    let over = r["budget_exceeded"].as_array().map_or(0, Vec::len);
    let failures: Vec<String> = r["failures"]
        .as_array()
        .unwrap()
        .iter()
        .take(4)
        .map(|c| format!("{} p={} k={} l={} z={} vol={}", c["lemma"], c["p"], c["k"], c["l"], c["z"], c["volume"]))
        .collect();
    Outcome {
        pass: r["failed"] == 0 && over == 0,
        detail: format!(
            "{} cases, {} failed, {over} over budget; first: {}",
            r["cases"],
            r["failed"],
            failures.join("; ")
        ),
    }
}

fn c6_report() -> Result<String, String> {
    let grid = BoundGrid {
        dim: 3,
        primes: vec![3, 5],
        max_total: 5,
    };
    bound_audit(&grid, DEFAULT_BUDGET).map(|r| to_json(&r)).map_err(|e| e.to_string())
}

fn c6(report: &Result<String, String>) -> Outcome {
    match report {
        Err(e) => Outcome { pass: false, detail: e.clone() },
        Ok(json) => {
            let r: serde_json::Value = serde_json::from_str(json).unwrap();
            let mut per_theorem: BTreeMap<String, (u64, u64)> = BTreeMap::new();
            for c in r["cases"].as_array().unwrap() {
                if c["pass"].is_null() {
                    continue;
                }
                let slot = per_theorem.entry(c["theorem"].as_str().unwrap().to_string()).or_default();
                slot.0 += 1;
                slot.1 += u64::from(c["pass"] == false);
            }
            let over = r["budget_exceeded"].as_array().map_or(0, Vec::len);
            let summary: Vec<String> = per_theorem.iter().map(|(t, (n, f))| format!("{t} {n}/{f}")).collect();
            Outcome {
                pass: r["failures"] == 0 && over == 0,
                detail: format!(
                    "{} checks, {} failures, {over} over budget (checked/failed: {})",
                    r["checked"],
                    r["failures"],
                    summary.join(", ")
                ),
            }
        }
    }
}

fn c7() -> Outcome {
    let (mut cases, mut bad) = (0u64, Vec::new());
    for (n, max_total) in [(3usize, 4u32), (4, 3)] {
        for p in [2u64, 3] {
            for total in 0..=max_total {
                for e in compositions(total, n) {
                    cases += 1;
                    match fiber_ratio_check(&DiagonalProfile::new(e.clone(), ctx(p)), DEFAULT_BUDGET) {
                        Ok(f) if f.pass => {}
                        Ok(f) => bad.push(format!("n={n} p={p} {e:?}: {} > {}", f.left, f.right)),
                        Err(err) => bad.push(format!("n={n} p={p} {e:?}: {err}")),
                    }
                }
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{cases} profiles, {} failures {}", bad.len(), bad.join("; ")),
    }
}

fn c8() -> Outcome {
    let t2 = |k: u64| t_count(2, k, DEFAULT_CEILING).expect("small index").value;
    let values: Vec<BigUint> = (0..=200u64).map(|k| if k == 0 { BigUint::default() } else { t2(k) }).collect();
    let (mut pairs, mut bad) = (0u64, Vec::new());
    for a in 1..=200u64 {
        for b in a..=200 / a {
            if a.gcd(&b) != 1 {
                continue;
            }
            pairs += 1;
            if values[(a * b) as usize] != &values[a as usize] * &values[b as usize] {
                bad.push(format!("({a},{b})"));
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{pairs} coprime pairs, {} failures {}", bad.len(), bad.join(" ")),
    }
}

fn c9() -> Outcome {
    let samples = match n_partial(3, 100_000, DEFAULT_CEILING, &CountCache::in_memory()) {
        Ok(s) => s,
        Err(e) => return Outcome { pass: false, detail: e.to_string() },
    };
    let fit = match asympt_fit(3, &samples) {
        Ok(f) => f,
        Err(e) => return Outcome { pass: false, detail: e.to_string() },
    };
    let at = |b| fit.residual_at(b).map_or(f64::INFINITY, |r| r.relative.abs());
    let (r4, r5) = (at(10_000), at(100_000));
    Outcome {
        pass: fit.leading_positive && r4 < GROWTH_RESIDUAL_LIMIT && r5 < GROWTH_RESIDUAL_LIMIT,
        detail: format!(
            "N_3(1e5) = {}, coefficients {:?}, residual {r4:.2e} at 1e4 and {r5:.2e} at 1e5 (limit {GROWTH_RESIDUAL_LIMIT})",
            samples.last().map(|s| s.1.to_string()).unwrap_or_default(),
            fit.coefficients
        ),
    }
}

fn c10() -> Outcome {
    let planted: [&[f64]; 4] = [&[1.0], &[0.5, 2.0], &[0.864, 0.792, 0.304], &[3.0, -1.0, 0.25, 0.02, 0.5, 0.01]];
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    for q in planted {
        let n = match q.len() {
            1 => 2,
            2 => 2,
            3 => 3,
            _ => 4,
        };
        // n = 2 fits a constant, so the linear plant is tested through the raw fitter
        let pts: Vec<(f64, f64)> = (0..=64)
            .map(|i| {
                let b = 10f64.powf(i as f64 / 8.0);
                let l = b.ln();
                (b, b * q.iter().rev().fold(0.0, |acc, c| acc * l + c))
            })
            .collect();
        let got = if q.len() == 2 {
            let y: Vec<(f64, f64)> = pts.iter().map(|&(b, n)| (b, n / b)).collect();
            subring_core::zeta::fit_log_polynomial(&y, 1).map_err(|e| e.to_string())
        } else {
            asympt_fit_points(n, &pts).map(|f| f.coefficients).map_err(|e| e.to_string())
        };
        match got {
            Ok(c) => {
                for (g, w) in c.iter().zip(q) {
                    worst = worst.max((g - w).abs() / w.abs());
                }
            }
            Err(e) => errors.push(e),
        }
    }
    Outcome {
        pass: errors.is_empty() && worst <= PLANTED_FIT_TOLERANCE,
        detail: format!("worst relative coefficient error {worst:.2e} (limit {PLANTED_FIT_TOLERANCE:.0e}) {}", errors.join("; ")),
    }
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |id: u32| only.as_ref().is_none_or(|ids| ids.contains(&id));

    let limits: [(u32, &str, u64); 11] = [
        (1, "duality and f_n(p) = C(n,2)", 60),
        (2, "t_1(k) = 1", 60),
        (3, "coefficient identity from volumes", 1800),
        (4, "membership system equals closure test", 1800),
        (5, "lemma audit", 600),
        (6, "bound theorems with explicit constants", 1200),
        (7, "fiber inequality", 1800),
        (8, "multiplicativity of t_2", 600),
        (9, "growth of N_3 against a log-quadratic", 3600),
        (10, "planted fits", 60),
        (11, "thread-count determinism", 3600),
    ];

    let single = pool(1);
    let mut reports: BTreeMap<u32, String> = BTreeMap::new();
    let mut failed = 0;
    let mut report = |id: u32, elapsed: Duration, o: Outcome| {
        let (_, name, limit) = limits[id as usize - 1];
        let in_time = elapsed.as_secs_f64() < limit as f64;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s, limit {limit}s{}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail.trim_end(),
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    };

    for id in 1..=10u32 {
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let outcome = single.install(|| match id {
            1 => c1(),
            2 => c2(),
            3 => {
                let r = c3_report();
                reports.insert(3, r.clone().unwrap_or_else(|e| e));
                c3(&r)
            }
            4 => c4(),
            5 => {
                let r = c5_report();
                reports.insert(5, r.clone());
                c5(&r)
            }
            6 => {
                let r = c6_report();
                reports.insert(6, r.clone().unwrap_or_else(|e| e));
                c6(&r)
            }
            7 => c7(),
            8 => c8(),
            9 => c9(),
            _ => c10(),
        });
        report(id, start.elapsed(), outcome);
    }

    if wanted(11) && !reports.is_empty() {
        let start = Instant::now();
        let multi = pool(4);
        let mut differing = Vec::new();
        for (&id, first) in &reports {
            let again = multi.install(|| match id {
                3 => c3_report().unwrap_or_else(|e| e),
                5 => c5_report(),
                _ => c6_report().unwrap_or_else(|e| e),
            });
            if &again != first {
                differing.push(id);
            }
        }
        let ids: Vec<u32> = reports.keys().copied().collect();
        report(
            11,
            start.elapsed(),
            Outcome {
                pass: differing.is_empty(),
                detail: format!("criteria {ids:?} rerun on 4 threads against 1, differing {differing:?}"),
            },
        );
    } else if wanted(11) {
        println!("criterion 11 SKIP thread-count determinism: none of 3, 5, 6 selected");
    }

    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

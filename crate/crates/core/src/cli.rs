//! The `subring` command line.
//!
//! Records go to stdout (or `--output`), diagnostics to stderr. Exit status
//! is 0 on success, 2 when a verification finds a failing case, and 1 on
//! usage or resource errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::Serialize;

use crate::domains::{
    coefficient_identity, compositions, equivalence_check, fiber_ratio_check, local_coefficient, mu,
    DiagonalProfile,
};
use crate::lattice::{f_count, f_values, t_count, CountCache, DEFAULT_CEILING, MAX_DIMENSION};
use crate::lemmas::{lemma_audit, GridSpec, LemmaId, SampleMode};
use crate::padic::{is_prime, ExactVolume, PrimeContext, DEFAULT_BUDGET};
use crate::zeta::{
    asympt_fit, bound_audit, convergence_probe, global_zeta, local_zeta, pole_probe, BoundGrid,
    CoefficientTable, ConvergenceSpec, ZetaQuery,
};

/// Largest prime accepted anywhere.
const MAX_PRIME: u64 = 1_000_000;
/// Largest index for `count`.
const MAX_INDEX: u64 = 1_000_000_000_000;
/// Largest bound for `growth`.
const MAX_GROWTH_BOUND: u64 = 10_000_000;
/// Largest exponent total or `k` accepted.
const MAX_EXPONENT: u32 = 64;

#[derive(Debug, Parser)]
#[command(name = "subring", version, about = "Exact counts of subrings and multiplicative sublattices of Z^n")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// Output format; text is a short human-readable rendering.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Node budget per volume or count (default 10^8 for volumes, 10^7 for counts).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
    /// JSON cache of prime-power subring counts, read and updated by `growth`.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=1024))]
    threads: Option<u64>,
    /// Write records here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count multiplicative sublattices (or subrings) of Z^n of a given index.
    ///
    /// CSV columns: n,k,kind,provenance,value
    Count {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_DIMENSION as u64))]
        n: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_INDEX))]
        index: u64,
        /// Count subrings (with identity) instead of multiplicative sublattices.
        #[arg(long)]
        subrings: bool,
    },
    /// Volume of the domain with a fixed diagonal profile.
    ///
    /// CSV columns: n,profile,p,mu
    Mu {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_DIMENSION as u64))]
        n: u64,
        /// Diagonal exponents, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        profile: Vec<u32>,
        #[arg(long)]
        p: u64,
    },
    /// Local coefficient a_n(k; p) with its per-profile breakdown.
    ///
    /// CSV columns: n,k,p,profile,weight_exponent,mu,contribution
    Coeff {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=4))]
        n: u64,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        p: u64,
    },
    /// Truncated zeta function of Z^n on the real axis.
    ///
    /// CSV columns: n,s,p_max,k_max,value. With --pole:
    /// n,order,s,zeta,below,at,above, where below/at/above are the
    /// truncated product times (s-1)^(order-1), ^order and ^(order+1).
    /// With --prime the local factor at that prime is reported and
    /// p_max holds the prime.
    Zeta {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_DIMENSION as u64))]
        n: u64,
        /// Real arguments, comma separated decimals.
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<String>,
        #[arg(long, default_value_t = 100)]
        p_max: u64,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        /// Report the local factor at this prime only.
        #[arg(long, conflicts_with = "pole")]
        prime: Option<u64>,
        /// Probe the pole at s = 1 along the given s values.
        #[arg(long)]
        pole: bool,
    },
    /// Exact partial sums of subring counts and a log-power fit of N(B)/B.
    ///
    /// CSV columns: b,count,ratio,fitted,relative_residual, one row per
    /// checkpoint B = 1, 2, 5, 10, 20, 50, ... and the final bound.
    Growth {
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=5))]
        n: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_GROWTH_BOUND))]
        b_max: u64,
        /// Smallest B used in the fit.
        #[arg(long, default_value_t = 1)]
        b_min: u64,
    },
    /// Re-derive a family of results and report any failing case.
    #[command(subcommand)]
    Verify(Verify),
}

#[derive(Debug, Subcommand)]
enum Verify {
    /// Volume bounds of the one- and two-variable solution sets.
    ///
    /// CSV columns: lemma,p,k,l,y,z,volume,case,bound,asserted,pass (one
    /// row per check of a failing case; the summary goes to stderr).
    Lemmas {
        #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3, 5])]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        #[arg(long, default_value_t = 4)]
        l_max: u32,
        /// Restrict to these lemma tags (xy-z, k/2, k-l, k+1, k+1-xyz, zk2, k-l-z).
        #[arg(long, value_delimiter = ',')]
        lemmas: Vec<String>,
    },
    /// Inequality systems against the closure test on every residue assignment.
    ///
    /// CSV columns: n,profile,p,precision,points,members,mismatches,exact_checks
    Equivalence {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3])]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        max_total: u32,
        /// Largest residue box per profile.
        #[arg(long, default_value_t = 1_000_000_000)]
        max_points: u64,
    },
    /// Local coefficients from volumes against direct sublattice counts.
    ///
    /// CSV columns: n,k,p,from_volumes,direct,pass
    Identity {
        /// `n:k_max` pairs.
        #[arg(long, value_delimiter = ',', default_values_t = ["2:4".to_string(), "3:3".into(), "4:2".into()])]
        cases: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3, 5])]
        primes: Vec<u64>,
    },
    /// Explicit-constant bounds (3 exponents) or ratio records (4 exponents).
    ///
    /// CSV columns: theorem,dim,profile,p,mu,bound,pass,ratio
    Bounds {
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(3..=4))]
        dim: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [3u64, 5])]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 5)]
        max_total: u32,
    },
    /// Volumes against the fiber bound one dimension down.
    ///
    /// CSV columns: n,profile,p,left,right,pass
    Fibers {
        /// `n:max_total` pairs, n in {3, 4}.
        #[arg(long, value_delimiter = ',', default_values_t = ["3:4".to_string(), "4:3".into()])]
        cases: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3])]
        primes: Vec<u64>,
    },
    /// Partial sums of the convergence series at increasing cutoffs.
    ///
    /// CSV columns: dim,sigma,axis,cutoff,partial_sum,increment
    Convergence {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=4))]
        dim: u64,
        #[arg(long)]
        sigma: String,
        #[arg(long, value_delimiter = ',', default_values_t = [5u64, 11, 23, 50])]
        p_cutoffs: Vec<u64>,
        #[arg(long, default_value_t = 6)]
        max_total: u32,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Resource(String),
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn resource(e: impl std::fmt::Display) -> Failure {
    Failure::Resource(e.to_string())
}

/// Whether a verification found failing cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Clean,
    Failed,
}

impl Verdict {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Clean
        } else {
            Verdict::Failed
        }
    }
}

struct Out<'a> {
    w: &'a mut (dyn Write + Send),
    format: Format,
    header_done: bool,
}

impl Out<'_> {
    fn text(&mut self, line: impl std::fmt::Display) -> io::Result<()> {
        writeln!(self.w, "{line}")
    }

    fn json<T: Serialize>(&mut self, rec: &T) -> io::Result<()> {
        let line = serde_json::to_string(rec).map_err(io::Error::other)?;
        writeln!(self.w, "{line}")
    }

    fn csv(&mut self, header: &[&str], row: &[String]) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        if !self.header_done {
            wtr.write_record(header).map_err(io::Error::other)?;
            self.header_done = true;
        }
        wtr.write_record(row).map_err(io::Error::other)?;
        let bytes = wtr.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        self.w.write_all(&bytes)
    }
}

fn profile_label(e: &[u32]) -> String {
    e.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn prime(p: u64) -> Result<PrimeContext, Failure> {
    if p > MAX_PRIME || !is_prime(p) {
        return Err(Failure::Usage(format!("{p} is not a prime up to {MAX_PRIME}")));
    }
    Ok(PrimeContext::new(p).expect("checked"))
}

fn exponent(name: &str, k: u32) -> Result<u32, Failure> {
    if k > MAX_EXPONENT {
        return Err(Failure::Usage(format!("{name} must be at most {MAX_EXPONENT}")));
    }
    Ok(k)
}

fn pairs(list: &[String], name: &str) -> Result<Vec<(usize, u32)>, Failure> {
    list.iter()
        .map(|s| {
            let bad = || Failure::Usage(format!("--{name} expects n:value pairs, got {s:?}"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Parses `args` (program name first) and runs the command, writing records
/// to `out` unless `--output` is given. Returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(text.as_bytes());
            } else {
                let _ = err.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.global.threads {
        builder = builder.num_threads(t as usize);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 1;
        }
    };
    let result = pool.install(|| match &cli.global.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::Resource(format!("{}: {e}", path.display())));
            file.and_then(|f| {
                let mut w = BufWriter::new(f);
                let r = execute(&cli, &mut w, err);
                w.flush()?;
                r
            })
        }
        None => execute(&cli, out, err),
    });
    match result {
        Ok(Verdict::Clean) => 0,
        Ok(Verdict::Failed) => 2,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Resource(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Entry point of the binary.
pub fn run() -> i32 {
    let mut out = io::stdout();
    let code = run_with(std::env::args_os(), &mut out, &mut io::stderr());
    let _ = out.flush();
    code
}

fn execute(cli: &Cli, w: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<Verdict, Failure> {
    let g = &cli.global;
    let mut out = Out {
        w,
        format: g.format,
        header_done: false,
    };
    let volume_budget = g.budget.unwrap_or(DEFAULT_BUDGET);
    let ceiling = g.budget.unwrap_or(DEFAULT_CEILING);
    match &cli.command {
        Command::Count { n, index, subrings } => {
            let n = *n as usize;
            let rec = if *subrings {
                f_count(n, *index, ceiling)
            } else {
                t_count(n, *index, ceiling)
            }
            .map_err(resource)?;
            match out.format {
                Format::Text => out.text(&rec.value)?,
                Format::Json => out.json(&rec)?,
                Format::Csv => {
                    let kind = serde_json::to_value(rec.kind).map_err(io::Error::other)?;
                    let prov = serde_json::to_value(rec.provenance).map_err(io::Error::other)?;
                    out.csv(
                        &["n", "k", "kind", "provenance", "value"],
                        &[
                            n.to_string(),
                            index.to_string(),
                            kind.as_str().unwrap_or_default().to_string(),
                            prov.as_str().unwrap_or_default().to_string(),
                            rec.value.to_string(),
                        ],
                    )?
                }
            }
            Ok(Verdict::Clean)
        }
        Command::Mu { n, profile, p } => {
            let n = *n as usize;
            if profile.len() != n {
                return Err(Failure::Usage(format!("--profile needs {n} exponents, got {}", profile.len())));
            }
            for &k in profile {
                exponent("profile entries", k)?;
            }
            let pr = DiagonalProfile::new(profile.clone(), prime(*p)?);
            let vol = mu(&pr, volume_budget).map_err(resource)?;
            #[derive(Serialize)]
            struct Rec<'a> {
                n: usize,
                profile: &'a [u32],
                p: u64,
                mu: &'a ExactVolume,
            }
            match out.format {
                Format::Text => out.text(&vol)?,
                Format::Json => out.json(&Rec {
                    n,
                    profile,
                    p: *p,
                    mu: &vol,
                })?,
                Format::Csv => out.csv(
                    &["n", "profile", "p", "mu"],
                    &[n.to_string(), profile_label(profile), p.to_string(), vol.to_string()],
                )?,
            }
            Ok(Verdict::Clean)
        }
        Command::Coeff { n, k, p } => {
            let coeff = local_coefficient(*n as usize, exponent("--k", *k)?, prime(*p)?, volume_budget)
                .map_err(resource)?;
            match out.format {
                Format::Text => {
                    out.text(&coeff.value)?;
                    for t in &coeff.breakdown {
                        out.text(format_args!(
                            "  profile {} weight p^{} mu {} contributes {}",
                            profile_label(&t.profile),
                            t.weight_exponent,
                            t.mu,
                            t.contribution
                        ))?;
                    }
                }
                Format::Json => out.json(&coeff)?,
                Format::Csv => {
                    for t in &coeff.breakdown {
                        out.csv(
                            &["n", "k", "p", "profile", "weight_exponent", "mu", "contribution"],
                            &[
                                n.to_string(),
                                k.to_string(),
                                p.to_string(),
                                profile_label(&t.profile),
                                t.weight_exponent.to_string(),
                                t.mu.to_string(),
                                t.contribution.to_string(),
                            ],
                        )?;
                    }
                }
            }
            Ok(Verdict::Clean)
        }
        Command::Zeta {
            n,
            s,
            p_max,
            k_max,
            prime: at,
            pole,
        } => {
            let n = *n as usize;
            let k_max = exponent("--k-max", *k_max)?;
            if *p_max > MAX_PRIME {
                return Err(Failure::Usage(format!("--p-max must be at most {MAX_PRIME}")));
            }
            let table = CoefficientTable::new(volume_budget);
            if *pole {
                let probe = pole_probe(n, s, *p_max, k_max, &table).map_err(resource)?;
                for row in &probe.rows {
                    match out.format {
                        Format::Text => out.text(format_args!(
                            "s={} zeta={} below={} at={} above={}",
                            row.s, row.zeta, row.below, row.at, row.above
                        ))?,
                        Format::Json => out.json(&serde_json::json!({
                            "n": n, "order": probe.order, "p_max": p_max, "k_max": k_max, "row": row
                        }))?,
                        Format::Csv => out.csv(
                            &["n", "order", "s", "zeta", "below", "at", "above"],
                            &[
                                n.to_string(),
                                probe.order.to_string(),
                                row.s.clone(),
                                row.zeta.clone(),
                                row.below.clone(),
                                row.at.clone(),
                                row.above.clone(),
                            ],
                        )?,
                    }
                }
                return Ok(Verdict::Clean);
            }
            for s_text in s {
                let (q, value) = match at {
                    Some(p) => {
                        prime(*p)?;
                        let q = ZetaQuery::new(n, s_text.clone(), *p, k_max);
                        let v = local_zeta(&q, *p, &table).map_err(resource)?;
                        (q, v)
                    }
                    None => {
                        let q = ZetaQuery::new(n, s_text.clone(), *p_max, k_max);
                        let v = global_zeta(&q, &table).map_err(resource)?;
                        (q, v)
                    }
                };
                match out.format {
                    Format::Text => out.text(format_args!("s={} {}", q.s, value))?,
                    Format::Json => out.json(&serde_json::json!({
                        "n": q.n, "s": q.s, "p_max": q.p_max, "k_max": q.k_max,
                        "local": at.is_some(), "value": value.to_string()
                    }))?,
                    Format::Csv => out.csv(
                        &["n", "s", "p_max", "k_max", "value"],
                        &[n.to_string(), q.s.clone(), q.p_max.to_string(), k_max.to_string(), value.to_string()],
                    )?,
                }
            }
            Ok(Verdict::Clean)
        }
        Command::Growth { n, b_max, b_min } => {
            let n = *n as usize;
            let cache = match &g.cache {
                Some(path) => CountCache::open(path).map_err(resource)?,
                None => CountCache::in_memory(),
            };
            let sums = f_values(n, *b_max, ceiling, &cache).map_err(resource)?;
            cache.save().map_err(resource)?;
            let samples: Vec<(u64, BigUint)> = sums.pairs().filter(|(b, _)| b >= b_min).collect();
            let fit = asympt_fit(n, &samples).map_err(resource)?;
            if let Some(wn) = &fit.warning {
                let _ = writeln!(err, "warning: {wn}");
            }
            let checkpoints = checkpoints(*b_max);
            match out.format {
                Format::Text => {
                    out.text(format_args!("N_{n}({b_max}) = {}", sums.at(*b_max)))?;
                    out.text(format_args!(
                        "fit degree {} coefficients {:?} leading_positive {}",
                        fit.degree, fit.coefficients, fit.leading_positive
                    ))?;
                    for b in checkpoints {
                        if let Some(r) = fit.residual_at(b) {
                            out.text(format_args!(
                                "B={b} N={} N/B={:.6} fitted={:.6} relative={:.3e}",
                                sums.at(b),
                                r.value,
                                r.fitted,
                                r.relative
                            ))?;
                        }
                    }
                }
                Format::Json => {
                    out.json(&serde_json::json!({
                        "n": n, "b_max": b_max, "count": sums.at(*b_max).to_string(), "fit": &fit
                    }))?;
                    for b in checkpoints {
                        if let Some(r) = fit.residual_at(b) {
                            out.json(&serde_json::json!({"b": b, "count": sums.at(b).to_string(), "residual": r}))?;
                        }
                    }
                }
                Format::Csv => {
                    for b in checkpoints {
                        if let Some(r) = fit.residual_at(b) {
                            out.csv(
                                &["b", "count", "ratio", "fitted", "relative_residual"],
                                &[
                                    b.to_string(),
                                    sums.at(b).to_string(),
                                    r.value.to_string(),
                                    r.fitted.to_string(),
                                    r.relative.to_string(),
                                ],
                            )?;
                        }
                    }
                }
            }
            Ok(Verdict::from_pass(fit.leading_positive))
        }
        Command::Verify(v) => verify(v, &mut out, err, volume_budget, ceiling),
    }
}

/// `1, 2, 5, 10, 20, 50, ...` up to `b_max`, then `b_max`.
fn checkpoints(b_max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let b = decade * m;
            if b > b_max {
                break 'outer;
            }
            out.push(b);
        }
        decade *= 10;
    }
    if out.last() != Some(&b_max) {
        out.push(b_max);
    }
    out
}

fn verify(v: &Verify, out: &mut Out, err: &mut (dyn Write + Send), budget: u64, ceiling: u64) -> Result<Verdict, Failure> {
    match v {
        Verify::Lemmas {
            primes,
            k_max,
            l_max,
            lemmas,
        } => {
            for &p in primes {
                prime(p)?;
            }
            let lemmas = if lemmas.is_empty() {
                LemmaId::ALL.to_vec()
            } else {
                lemmas
                    .iter()
                    .map(|t| LemmaId::from_tag(t).ok_or_else(|| Failure::Usage(format!("unknown lemma {t:?}"))))
                    .collect::<Result<_, _>>()?
            };
            let grid = GridSpec {
                lemmas,
                primes: primes.clone(),
                k_max: exponent("--k-max", *k_max)?.min(12),
                l_max: exponent("--l-max", *l_max)?,
                samples: SampleMode::Exhaustive,
            };
            let report = lemma_audit(&grid, budget);
            let _ = writeln!(
                err,
                "lemmas: {} cases, {} failed, {} over budget, digest {}",
                report.cases,
                report.failed,
                report.budget_exceeded.len(),
                report.digest
            );
            match out.format {
                Format::Text => {
                    out.text(format_args!(
                        "cases {} passed {} failed {} budget_exceeded {}",
                        report.cases,
                        report.passed,
                        report.failed,
                        report.budget_exceeded.len()
                    ))?;
                    for c in &report.failures {
                        let failing: Vec<String> = c
                            .checks
                            .iter()
                            .filter(|ch| ch.asserted && !ch.pass)
                            .map(|ch| format!("{} <= {}", ch.case, ch.bound))
                            .collect();
                        out.text(format_args!(
                            "FAIL {} p={} k={} l={:?} y={:?} z={:?} volume={} violates {}",
                            c.lemma.tag(),
                            c.p,
                            c.k,
                            c.l,
                            c.y,
                            c.z,
                            c.volume,
                            failing.join("; ")
                        ))?;
                    }
                }
                Format::Json => {
                    out.json(&serde_json::json!({
                        "cases": report.cases, "passed": report.passed, "failed": report.failed,
                        "budget_exceeded": report.budget_exceeded,
                        "half_bound_tightness": report.half_bound_tightness,
                        "two_adic_gap_max": report.two_adic_gap_max, "digest": report.digest
                    }))?;
                    for c in &report.failures {
                        out.json(c)?;
                    }
                }
                Format::Csv => {
                    let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
                    for c in &report.failures {
                        for ch in &c.checks {
                            out.csv(
                                &["lemma", "p", "k", "l", "y", "z", "volume", "case", "bound", "asserted", "pass"],
                                &[
                                    c.lemma.tag().into(),
                                    c.p.to_string(),
                                    c.k.to_string(),
                                    opt(c.l.map(u64::from)),
                                    opt(c.y),
                                    opt(c.z),
                                    c.volume.to_string(),
                                    ch.case.clone(),
                                    ch.bound.to_string(),
                                    ch.asserted.to_string(),
                                    ch.pass.to_string(),
                                ],
                            )?;
                        }
                    }
                }
            }
            let clean = report.failed == 0 && report.budget_exceeded.is_empty();
            Ok(Verdict::from_pass(clean))
        }
        Verify::Equivalence {
            dims,
            primes,
            max_total,
            max_points,
        } => {
            let mut clean = true;
            for &n in dims {
                if !(2..=4).contains(&n) {
                    return Err(Failure::Usage(format!("--dims entries must be 2, 3 or 4, got {n}")));
                }
                for &p in primes {
                    let ctx = prime(p)?;
                    for total in 0..=exponent("--max-total", *max_total)? {
                        for e in compositions(total, n) {
                            let r = equivalence_check(&DiagonalProfile::new(e, ctx), *max_points).map_err(resource)?;
                            clean &= r.mismatches == 0;
                            match out.format {
                                Format::Text => out.text(format_args!(
                                    "n={} profile={} p={} points={} members={} mismatches={}",
                                    r.n,
                                    profile_label(&r.profile),
                                    r.p,
                                    r.points,
                                    r.members,
                                    r.mismatches
                                ))?,
                                Format::Json => out.json(&r)?,
                                Format::Csv => out.csv(
                                    &["n", "profile", "p", "precision", "points", "members", "mismatches", "exact_checks"],
                                    &[
                                        r.n.to_string(),
                                        profile_label(&r.profile),
                                        r.p.to_string(),
                                        r.precision.to_string(),
                                        r.points.to_string(),
                                        r.members.to_string(),
                                        r.mismatches.to_string(),
                                        r.exact_checks.to_string(),
                                    ],
                                )?,
                            }
                        }
                    }
                }
            }
            Ok(Verdict::from_pass(clean))
        }
        Verify::Identity { cases, primes } => {
            let mut clean = true;
            for (n, k_max) in pairs(cases, "cases")? {
                if !(1..=4).contains(&n) {
                    return Err(Failure::Usage(format!("identity cases need n in 1..=4, got {n}")));
                }
                for &p in primes {
                    let ctx = prime(p)?;
                    for k in 0..=exponent("k", k_max)? {
                        let c = coefficient_identity(n, k, ctx, budget, ceiling).map_err(resource)?;
                        clean &= c.pass;
                        match out.format {
                            Format::Text => out.text(format_args!(
                                "n={} k={} p={} volumes={} direct={} {}",
                                c.n,
                                c.k,
                                c.p,
                                c.from_volumes,
                                c.direct,
                                if c.pass { "ok" } else { "MISMATCH" }
                            ))?,
                            Format::Json => out.json(&c)?,
                            Format::Csv => out.csv(
                                &["n", "k", "p", "from_volumes", "direct", "pass"],
                                &[
                                    c.n.to_string(),
                                    c.k.to_string(),
                                    c.p.to_string(),
                                    c.from_volumes.to_string(),
                                    c.direct.to_string(),
                                    c.pass.to_string(),
                                ],
                            )?,
                        }
                    }
                }
            }
            Ok(Verdict::from_pass(clean))
        }
        Verify::Bounds {
            dim,
            primes,
            max_total,
        } => {
            for &p in primes {
                prime(p)?;
            }
            let grid = BoundGrid {
                dim: *dim as usize,
                primes: primes.clone(),
                max_total: exponent("--max-total", *max_total)?,
            };
            let report = bound_audit(&grid, budget).map_err(resource)?;
            let _ = writeln!(
                err,
                "bounds: {} records, {} checked, {} failed, {} enumerated, {} over budget, digest {}",
                report.cases.len(),
                report.checked,
                report.failures,
                report.enumerated.len(),
                report.budget_exceeded.len(),
                report.digest
            );
            for c in &report.cases {
                match out.format {
                    Format::Text => out.text(format_args!(
                        "{} p={} profile={} mu={} bound={} {}",
                        c.theorem,
                        c.p,
                        profile_label(&c.profile),
                        c.mu,
                        c.bound,
                        match (c.pass, &c.ratio) {
                            (Some(true), _) => "pass".to_string(),
                            (Some(false), _) => "FAIL".to_string(),
                            (None, Some(r)) => format!("ratio={r}"),
                            (None, None) => String::new(),
                        }
                    ))?,
                    Format::Json => out.json(c)?,
                    Format::Csv => out.csv(
                        &["theorem", "dim", "profile", "p", "mu", "bound", "pass", "ratio"],
                        &[
                            c.theorem.into(),
                            c.dim.to_string(),
                            profile_label(&c.profile),
                            c.p.to_string(),
                            c.mu.to_string(),
                            c.bound.to_string(),
                            c.pass.map(|b| b.to_string()).unwrap_or_default(),
                            c.ratio.clone().unwrap_or_default(),
                        ],
                    )?,
                }
            }
            for label in &report.budget_exceeded {
                let _ = writeln!(err, "over budget: {label}");
            }
            Ok(Verdict::from_pass(report.failures == 0 && report.budget_exceeded.is_empty()))
        }
        Verify::Fibers { cases, primes } => {
            let mut clean = true;
            for (n, max_total) in pairs(cases, "cases")? {
                if !(3..=4).contains(&n) {
                    return Err(Failure::Usage(format!("fiber cases need n in {{3, 4}}, got {n}")));
                }
                for &p in primes {
                    let ctx = prime(p)?;
                    for total in 0..=exponent("total", max_total)? {
                        for e in compositions(total, n) {
                            let c = fiber_ratio_check(&DiagonalProfile::new(e, ctx), budget).map_err(resource)?;
                            clean &= c.pass;
                            match out.format {
                                Format::Text => out.text(format_args!(
                                    "n={} profile={} p={} mu={} bound={} {}",
                                    c.n,
                                    profile_label(&c.profile),
                                    c.p,
                                    c.left,
                                    c.right,
                                    if c.pass { "pass" } else { "FAIL" }
                                ))?,
                                Format::Json => out.json(&c)?,
                                Format::Csv => out.csv(
                                    &["n", "profile", "p", "left", "right", "pass"],
                                    &[
                                        c.n.to_string(),
                                        profile_label(&c.profile),
                                        c.p.to_string(),
                                        c.left.to_string(),
                                        c.right.to_string(),
                                        c.pass.to_string(),
                                    ],
                                )?,
                            }
                        }
                    }
                }
            }
            Ok(Verdict::from_pass(clean))
        }
        Verify::Convergence {
            dim,
            sigma,
            p_cutoffs,
            max_total,
        } => {
            if p_cutoffs.iter().any(|&c| c > MAX_PRIME) {
                return Err(Failure::Usage(format!("prime cutoffs must be at most {MAX_PRIME}")));
            }
            let spec = ConvergenceSpec {
                dim: *dim as usize,
                sigma: sigma.clone(),
                p_cutoffs: p_cutoffs.clone(),
                max_total: exponent("--max-total", *max_total)?,
            };
            let report = convergence_probe(&spec, budget).map_err(resource)?;
            match out.format {
                Format::Text => {
                    out.text(format_args!(
                        "dim {} sigma {} threshold {} above_threshold {} monotone {}",
                        report.dim, report.sigma, report.threshold, report.above_threshold, report.monotone
                    ))?;
                    for (axis, rows) in [("prime", &report.by_prime), ("total", &report.by_total)] {
                        for r in rows {
                            out.text(format_args!(
                                "{axis} {} sum={} increment={}",
                                r.cutoff, r.partial_sum, r.increment
                            ))?;
                        }
                    }
                }
                Format::Json => out.json(&report)?,
                Format::Csv => {
                    for (axis, rows) in [("prime", &report.by_prime), ("total", &report.by_total)] {
                        for r in rows {
                            out.csv(
                                &["dim", "sigma", "axis", "cutoff", "partial_sum", "increment"],
                                &[
                                    report.dim.to_string(),
                                    report.sigma.clone(),
                                    axis.into(),
                                    r.cutoff.clone(),
                                    r.partial_sum.clone(),
                                    r.increment.clone(),
                                ],
                            )?;
                        }
                    }
                }
            }
            for label in &report.budget_exceeded {
                let _ = writeln!(err, "over budget: {label}");
            }
            Ok(Verdict::from_pass(report.monotone && report.budget_exceeded.is_empty()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("subring").chain(args.iter().copied());
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn documented_invocations() {
        assert_eq!(run_args(&["count", "--n", "3", "--index", "4", "--subrings"]), (0, "4\n".into(), String::new()));
        assert_eq!(run_args(&["mu", "--n", "2", "--profile", "1,0", "--p", "5"]).1, "2/5^1\n");
        let (code, out, _) = run_args(&["coeff", "--n", "2", "--k", "1", "--p", "7"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("3\n"));
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["count", "--n", "3", "--index", "4", "--bogus"]).0, 1);
        assert_eq!(run_args(&["count", "--n", "9", "--index", "4"]).0, 1);
        assert_eq!(run_args(&["mu", "--n", "2", "--profile", "1", "--p", "5"]).0, 1);
        assert_eq!(run_args(&["mu", "--n", "2", "--profile", "1,0", "--p", "6"]).0, 1);
        assert_eq!(run_args(&[]).0, 1);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn json_and_csv_records() {
        let (_, out, _) = run_args(&["--format", "json", "count", "--n", "2", "--index", "6"]);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["value"], "9");
        let (_, out, _) = run_args(&["count", "--format", "csv", "--n", "2", "--index", "6"]);
        assert_eq!(out, "n,k,kind,provenance,value\n2,6,multiplicative_lattices,direct-enumeration,9\n");
    }

    #[test]
    fn budget_overrun_is_a_resource_error() {
        let (code, _, err) = run_args(&["--budget", "5", "mu", "--n", "3", "--profile", "2,2,1", "--p", "3"]);
        assert_eq!(code, 1);
        assert!(err.contains("budget"), "{err}");
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let args = ["verify", "bounds", "--primes", "3", "--max-total", "3", "--format", "json"];
        let one = run_args(&[&["--threads", "1"][..], &args[..]].concat());
        let two = run_args(&[&["--threads", "2"][..], &args[..]].concat());
        assert_eq!(one.0, 0);
        assert_eq!(one.1, two.1);
    }

    #[test]
    fn checkpoint_ladder() {
        assert_eq!(checkpoints(120), vec![1, 2, 5, 10, 20, 50, 100, 120]);
        assert_eq!(checkpoints(100), vec![1, 2, 5, 10, 20, 50, 100]);
    }
}

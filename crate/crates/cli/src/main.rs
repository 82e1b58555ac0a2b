//! `recurrence` — simulators, exact engines and verification experiments.
//!
//! Exit status: 0 success, 1 usage error, 2 numerical failure, 3 a
//! verification experiment produced a failing row.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recurrence_core::chains::{self, ChainKind};
use recurrence_core::exact_r::{self, cdf_grid, harmonic_table, tail_table};
use recurrence_core::harness::{self, EmpiricalCdf, ExperimentName, ExperimentSpec};
use recurrence_core::zlimit::{self, SpecialFnAccuracy};
use recurrence_core::{Config, Error, Model, ZLaw};

#[derive(Parser, Debug)]
#[command(name = "recurrence", version, about = "Hitting times and limit laws for heavy-tailed AR and random exchange chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo estimate of P(T > n) on a grid of n.
    Simulate(Flags),
    /// Exact tail table v_n (or P_x(T > n) with --start) for the random exchange chain.
    ExactTail(Flags),
    /// Harmonic function G on cells 0..=nmax; with --start also checks harmonicity at that point.
    Harmonic(Flags),
    /// Expected recurrence time: exact for the random exchange chain, Monte Carlo with --reps.
    ExpectedT(Flags),
    /// Hitting law of the limit process Z: P_z(T0 > t) at --times, KS check with --reps.
    Zlaw(Flags),
    /// Recurrence class of the chains driven by a model.
    Classify(Flags),
    /// Run a named verification experiment (thm2, thm4, thm5, zlaw, funclimit, sandwich, oracle).
    Verify {
        /// Experiment key.
        experiment: String,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Innovation law, e.g. log-tail:c=0.5, pareto:alpha=2,scale=1, discrete:file=PATH.
    #[arg(long)]
    model: Option<String>,
    /// Recurrence threshold x0 (log_A units).
    #[arg(long)]
    x0: Option<f64>,
    /// Base A > 1 of the autoregression.
    #[arg(long = "A", default_value_t = 2.0)]
    a: f64,
    /// Starting point (log_A units; z for zlaw).
    #[arg(long)]
    start: Option<f64>,
    /// Largest n of an exact table.
    #[arg(long)]
    nmax: Option<usize>,
    /// Comma-separated ascending list of n.
    #[arg(long, value_delimiter = ',')]
    ngrid: Option<Vec<u64>>,
    /// Monte Carlo replicates.
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed; required whenever replicates are drawn.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Changes speed only, never results.
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Tolerance (meaning depends on the subcommand).
    #[arg(long)]
    tol: Option<f64>,
    /// Chain: ar, max-ar or random-exchange.
    #[arg(long, default_value = "random-exchange")]
    chain: String,
    /// Comma-separated time points for zlaw.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Simulation horizon; censored paths beyond it are reported as such.
    #[arg(long)]
    horizon: Option<u64>,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = match &cli.command {
        Command::Verify { flags, .. } => flags.threads,
        Command::Simulate(f)
        | Command::ExactTail(f)
        | Command::Harmonic(f)
        | Command::ExpectedT(f)
        | Command::Zlaw(f)
        | Command::Classify(f) => f.threads,
    };
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot build a pool of {n} threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification) => ExitCode::from(3),
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Simulate(f) => simulate(&f),
        Command::ExactTail(f) => exact_tail(&f),
        Command::Harmonic(f) => harmonic(&f),
        Command::ExpectedT(f) => expected_t(&f),
        Command::Zlaw(f) => zlaw(&f),
        Command::Classify(f) => {
            println!("{}", model(&f)?.classify());
            Ok(())
        }
        Command::Verify { experiment, flags } => verify(&experiment, &flags),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required")))
}

fn model(f: &Flags) -> Result<Model, Failure> {
    let spec = f.model.as_deref().ok_or_else(|| Failure::Usage("--model is required".into()))?;
    Ok(spec.parse()?)
}

fn chain(f: &Flags) -> Result<ChainKind, Failure> {
    Ok(f.chain.parse()?)
}

/// Seed and replicate count, both required once either is in play.
fn mc(f: &Flags) -> Result<(u64, u64), Failure> {
    let reps = need(f.reps, "reps")?;
    let seed = f.seed.ok_or_else(|| Failure::Usage("--seed is required for Monte Carlo runs".into()))?;
    Ok((seed, reps))
}

/// CSV to `--out` or stdout.
fn emit(f: &Flags, text: &str) -> Outcome {
    match &f.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Header plus rows of numbers.
struct Table<'a> {
    columns: &'a [&'a str],
    rows: Vec<Vec<f64>>,
}

/// Rows as JSON objects keyed by column; non-finite values become `null`.
fn table_json(t: &Table) -> String {
    let rows: Vec<serde_json::Value> = t
        .rows
        .iter()
        .map(|r| serde_json::Value::Object(t.columns.iter().zip(r).map(|(c, v)| ((*c).to_owned(), serde_json::json!(v))).collect()))
        .collect();
    serde_json::to_string_pretty(&rows).expect("plain values serialize") + "\n"
}

fn table_csv(t: &Table) -> String {
    let mut s = t.columns.join(",");
    s.push('\n');
    for r in &t.rows {
        let fields: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn output(f: &Flags, t: Table) -> Outcome {
    emit(f, &table_csv(&t))?;
    if let Some(path) = &f.json {
        std::fs::write(path, table_json(&t))?;
    }
    Ok(())
}

fn sim_config(f: &Flags, horizon: u64) -> Result<Config, Failure> {
    let (seed, reps) = mc(f)?;
    Ok(Config {
        a: f.a,
        x0_log: need(f.x0, "x0")?,
        start_log: need(f.start, "start")?,
        horizon_cap: f.horizon.unwrap_or(horizon),
        master_seed: seed,
        replicates: reps,
    })
}

fn simulate(f: &Flags) -> Outcome {
    let m = model(f)?;
    let grid = f.ngrid.clone().ok_or_else(|| Failure::Usage("--ngrid is required".into()))?;
    let cap = grid.iter().copied().max().unwrap_or(1);
    let config = sim_config(f, cap)?;
    let est = chains::estimate_tail(chain(f)?, &m, &config, &grid)?;
    let rows = est
        .iter()
        .map(|e| vec![e.n as f64, e.p_hat, e.std_err, e.survivors as f64, e.replicates as f64])
        .collect();
    output(f, Table { columns: &["n", "p_hat", "std_err", "survivors", "replicates"], rows })
}

fn exact_tail(f: &Flags) -> Outcome {
    let m = model(f)?;
    let x0 = need(f.x0, "x0")?;
    let nmax = need(f.nmax, "nmax")?;
    let grid = cdf_grid(&m, x0, nmax)?;
    let table = tail_table(&grid, nmax)?;
    let (columns, rows): (&[&str], Vec<Vec<f64>>) = match f.start {
        None => (&["n", "v_n"], table.v().iter().enumerate().map(|(n, &v)| vec![n as f64, v]).collect()),
        Some(x) => {
            let rows = (0..=nmax)
                .map(|n| exact_r::tail_from(&table, n, x).map(|p| vec![n as f64, p]))
                .collect::<Result<_, _>>()?;
            (&["n", "P_x(T>n)"], rows)
        }
    };
    output(f, Table { columns, rows })
}

fn harmonic(f: &Flags) -> Outcome {
    let m = model(f)?;
    let x0 = need(f.x0, "x0")?;
    let nmax = need(f.nmax, "nmax")?;
    let grid = cdf_grid(&m, x0, nmax)?;
    let g = harmonic_table(&grid, nmax);
    if let Some(x) = f.start {
        let tol = f.tol.unwrap_or(exact_r::PRODUCT_TOL);
        let residual = exact_r::check_harmonicity(&m, x0, x, tol)?;
        eprintln!("G({x}) = {}, harmonicity residual = {residual:e}", g.value(x)?);
    }
    let rows = g.values().iter().enumerate().map(|(n, &v)| vec![n as f64, v]).collect();
    output(f, Table { columns: &["n", "G_n"], rows })
}

fn expected_t(f: &Flags) -> Outcome {
    let m = model(f)?;
    let x0 = need(f.x0, "x0")?;
    let start = need(f.start, "start")?;
    if f.reps.is_some() || f.seed.is_some() {
        let config = sim_config(f, 10_000_000)?;
        let est = chains::estimate_expected_t(chain(f)?, &m, &config)?;
        let rows = vec![vec![est.mean, est.std_err, est.ci_low, est.ci_high, est.replicates as f64]];
        return output(f, Table { columns: &["mean", "std_err", "ci_low", "ci_high", "replicates"], rows });
    }
    if chain(f)? != ChainKind::RandomExchange {
        return Err(Failure::Usage("exact E_x[T] exists for the random exchange chain only; pass --reps and --seed".into()));
    }
    let k = exact_r::cell_index(x0, start)?;
    let grid = cdf_grid(&m, x0, k + 1)?;
    let mean = exact_r::expected_t_exact(&grid, start)?;
    output(f, Table { columns: &["start", "expected_T"], rows: vec![vec![start, mean]] })
}

fn zlaw(f: &Flags) -> Outcome {
    let m = model(f)?;
    let c = m
        .log_tail_index()
        .filter(|&c| c < 1.0)
        .ok_or_else(|| Failure::Usage(format!("zlaw needs a log-tail model with c < 1, got {m}")))?;
    let params = ZLaw::new(c)?;
    let acc = SpecialFnAccuracy::default();
    let z = f.start.unwrap_or(1.0);
    let times = f.times.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    let rows = times
        .iter()
        .map(|&t| zlimit::t0_tail(&params, z, t, &acc).map(|p| vec![t, p]))
        .collect::<Result<_, _>>()?;
    if f.reps.is_some() || f.seed.is_some() {
        let (seed, reps) = mc(f)?;
        let draws = harness::par_draws(seed, reps, |rng| zlimit::sample_t0(&params, z, rng))?;
        let ecdf = EmpiricalCdf::new(draws)?;
        let ks = harness::ks_distance(&ecdf, |s| {
            if s <= z {
                0.0
            } else {
                1.0 - zlimit::t0_tail(&params, z, s, &acc).unwrap_or(f64::NAN)
            }
        });
        eprintln!("KS(sample_t0, exact law) = {ks:.6} over {reps} draws (99% critical {:.6})", harness::ks_critical_99(reps as usize));
    }
    output(f, Table { columns: &["t", "P_z(T0>t)"], rows })
}

fn verify(key: &str, f: &Flags) -> Outcome {
    let name: ExperimentName = key.parse()?;
    let mut spec = ExperimentSpec::defaults(name);
    if let Some(m) = &f.model {
        spec.model = m.clone();
    }
    if let Some(x0) = f.x0 {
        spec.x0 = x0;
    }
    spec.a = f.a;
    if let Some(s) = f.start {
        spec.start = s;
    }
    if let Some(g) = &f.ngrid {
        spec.n_grid = g.clone();
    }
    if let Some(r) = f.reps {
        spec.replicates = r;
    }
    if let Some(t) = f.tol {
        spec.tol = t;
    }
    if name.is_monte_carlo() {
        spec.seed = f.seed.ok_or_else(|| Failure::Usage(format!("--seed is required for `verify {key}`")))?;
    } else if let Some(s) = f.seed {
        spec.seed = s;
    }
    let record = harness::run_experiment(&spec)?;
    emit(f, &harness::csv_string(&record)?)?;
    if let Some(path) = &f.json {
        harness::write_json(&record, path)?;
    }
    if record.verdict {
        eprintln!("{}: PASS", name.key());
        Ok(())
    } else {
        eprintln!("{}: FAIL", name.key());
        for row in record.rows.iter().filter(|r| !r.pass) {
            eprintln!("  failing: {} n={:?} observed={} reference={}", row.label, row.n, row.observed, row.reference);
        }
        Err(Failure::Verification)
    }
}

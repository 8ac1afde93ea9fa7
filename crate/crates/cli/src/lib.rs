//! Command-line front end: scenario loading, single runs, sweeps and
//! convergence traces.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 infeasible,
//! 3 not converged (stalled, iteration cap, failed audit).

pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ris_swipt::bcd::{self, Axis, BcdError, RunOutcome, Scheme, SweepSpec};
use ris_swipt::bf_stage::StageError;
use ris_swipt::config::{self, DEFAULT_TOML, SCHEMA_VERSION};
use ris_swipt::scene::{gen_channels, RisKind, Scenario};
use ris_swipt::seeds;

use output::{CsvSink, RunRecord, RunReport, SweepSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_STALLED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ris-swipt", version, about = "Transmit-power minimization for RIS-assisted SWIPT downlinks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scheme on one channel realization and write a JSON report.
    Solve(SolveArgs),
    /// Monte Carlo sweep over one scenario axis.
    Sweep(SweepArgs),
    /// Per-iteration objective trajectories of the alternating design.
    Convergence(ConvergenceArgs),
    /// Print the default scenario file.
    DefaultConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario file; defaults are used when omitted.
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "active")]
    pub scheme: Scheme,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: Option<PathBuf>,
    /// M, N, xi or p_max (mW).
    #[arg(long)]
    pub axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "active,passive,passive_random_phase,no_ris")]
    pub schemes: Vec<Scheme>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary path; the CSV path with a `.json` extension when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Fill the wall_ms column (makes the CSV run-dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    pub config: Option<PathBuf>,
    /// Number of channel realizations.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reflect budgets in mW.
    #[arg(long, value_delimiter = ',', default_value = "10,15")]
    pub pmax_list: Vec<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Infeasible(String),
    Stalled(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
            Failure::Stalled(_) => EXIT_STALLED,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::Stalled(m) => m,
        }
    }
}

impl From<BcdError> for Failure {
    fn from(e: BcdError) -> Self {
        match e {
            BcdError::Infeasible { .. } | BcdError::Stage(StageError::Infeasible { .. }) => Failure::Infeasible(e.to_string()),
            BcdError::Scene(_) | BcdError::Invalid(_) => Failure::Config(e.to_string()),
            other => Failure::Stalled(other.to_string()),
        }
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Convergence(a) => convergence(&a),
        Command::DefaultConfig { out } => default_config(out.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

pub fn load_scenario(path: Option<&Path>) -> Result<Scenario, String> {
    match path {
        Some(p) => config::load(p).map_err(|e| e.to_string()),
        None => config::parse(DEFAULT_TOML).map_err(|e| e.to_string()),
    }
}

fn scenario(path: Option<&Path>) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(Failure::Config)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_fail(path, e))
}

fn workers(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)
}

/// Runs `scheme` on the realization drawn from `seed`.
pub fn solve_once(scn: &Scenario, scheme: Scheme, seed: u64) -> Result<RunOutcome, BcdError> {
    let gen = Scenario { ris_kind: RisKind::Active, ..scn.clone() };
    let ch = gen_channels(&gen, seed)?;
    bcd::run_scheme(scheme, &ch, scn, seed)
}

fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let scn = scenario(a.config.as_deref())?;
    let out = solve_once(&scn, a.scheme, a.seed)?;
    let report = RunReport { record: RunRecord::new(&scn, &out), f1: out.trace.f1(), trace: &out.trace, design: &out };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Config(e.to_string()))?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_fail(p, e))?;
        }
        None => println!("{text}"),
    }
    if out.converged() {
        Ok(())
    } else {
        Err(Failure::Stalled(format!(
            "run ended with status {}{}",
            out.trace.status,
            out.trace.stall_reason.as_deref().map(|r| format!(": {r}")).unwrap_or_default()
        )))
    }
}

fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let scn = scenario(a.config.as_deref())?;
    let spec = SweepSpec {
        axis: a.axis,
        values: a.values.clone(),
        trials: a.trials,
        seed0: a.seed,
        schemes: a.schemes.clone(),
        workers: workers(a.workers),
    };
    let mut sink = CsvSink::new(create(&a.out)?, &output::SWEEP_HEADER).map_err(|e| io_fail(&a.out, e))?;
    let mut write_err = None;
    let rows = bcd::sweep(&scn, &spec, |row| {
        if write_err.is_none() {
            write_err = sink.push(&output::sweep_fields(row, a.timing)).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_fail(&a.out, e));
    }
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        axis: a.axis.to_string(),
        values: &a.values,
        trials: a.trials,
        seed: a.seed,
        schemes: a.schemes.iter().map(|s| s.to_string()).collect(),
        cells: bcd::summarize(&rows),
    };
    let path = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| io_fail(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_fail(&path, e))?;
    for c in summary.cells.iter().filter(|c| c.flagged) {
        eprintln!("warning: {} at {}={} failed on {}/{} trials", c.scheme, a.axis, c.axis_value, c.failures, c.trials);
    }
    Ok(())
}

fn convergence(a: &ConvergenceArgs) -> Result<(), Failure> {
    let scn = scenario(a.config.as_deref())?;
    if a.seeds == 0 || a.pmax_list.is_empty() {
        return Err(Failure::Config("need at least one seed and one p_max".into()));
    }
    if let Some(p) = a.pmax_list.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Failure::Config(format!("field `pmax-list`: {p} is not a positive budget")));
    }
    let jobs: Vec<(f64, usize)> = a.pmax_list.iter().flat_map(|&p| (0..a.seeds).map(move |s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers(a.workers))
        .build()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let results: Vec<Result<RunOutcome, BcdError>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(p, s)| solve_once(&scn, Scheme::Active { p_max: Some(p * 1e-3) }, seeds::trial_seed(a.seed, s as u64)))
            .collect()
    });

    let mut sink = CsvSink::new(create(&a.out)?, &output::CONVERGENCE_HEADER).map_err(|e| io_fail(&a.out, e))?;
    let mut worst: Option<Failure> = None;
    let mut note = |f: Failure| {
        eprintln!("warning: {}", f.message());
        if worst.as_ref().is_none_or(|w| f.code() < w.code()) {
            worst = Some(f);
        }
    };
    for (&(p, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(out) => {
                for row in output::convergence_fields(p, s, &out.trace) {
                    sink.push(&row).map_err(|e| io_fail(&a.out, e))?;
                }
                if !out.trace.is_monotone() {
                    note(Failure::Stalled(format!("p_max={p} mW seed #{s}: objective increased")));
                } else if !out.converged() {
                    note(Failure::Stalled(format!("p_max={p} mW seed #{s}: status {}", out.trace.status)));
                }
            }
            Err(e) => note(Failure::from(e)),
        }
    }
    worst.map_or(Ok(()), Err)
}

fn default_config(out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, DEFAULT_TOML).map_err(|e| io_fail(p, e)),
        None => io::stdout().write_all(DEFAULT_TOML.as_bytes()).map_err(|e| Failure::Config(e.to_string())),
    }
}

//! Alternating design of beamformers/PS ratios and the RIS, the benchmark
//! schemes, and Monte Carlo sweeps over one scenario axis.
//!
//! One outer iteration solves the RIS stage for the current beamformers and
//! then the beamforming stage for the new RIS vector. The initial
//! beamforming solve is iteration 0, so a trace of `I` outer iterations
//! carries `I + 1` records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rand::Rng;
use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::bf_stage::{solve_p3, ConstraintClass, RhoMode, StageError};
use crate::metrics::{self, Audit, BfSolution, MetricsError, RisVector};
use crate::ris_stage::ippa;
use crate::scene::{gen_channels, perturb_csi, ChannelSet, RisKind, Scenario, SceneError};
use crate::seeds;

/// Relative increase of `f1` above which an alternation step is rejected.
pub const MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BcdError {
    #[error("infeasible from the start ({class:?} constraints)")]
    Infeasible { class: ConstraintClass },
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Invalid(String),
}

/// Benchmark designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Full alternating design; `p_max` (W) overrides the scenario budget.
    Active { p_max: Option<f64> },
    /// Active design with PS ratios frozen at uniform draws in [0.1, 0.9].
    ActiveRandomRho,
    /// Alternating design with a unit-modulus surface.
    Passive,
    PassiveRandomRho,
    /// Unit-modulus surface with random phases; beamforming stage only.
    PassiveRandomPhase,
    /// Direct links only.
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Active { p_max: None },
        Scheme::ActiveRandomRho,
        Scheme::Passive,
        Scheme::PassiveRandomRho,
        Scheme::PassiveRandomPhase,
        Scheme::NoRis,
    ];

    pub fn ris_kind(&self) -> RisKind {
        match self {
            Scheme::Active { .. } | Scheme::ActiveRandomRho => RisKind::Active,
            Scheme::Passive | Scheme::PassiveRandomRho | Scheme::PassiveRandomPhase => RisKind::Passive,
            Scheme::NoRis => RisKind::None,
        }
    }

    /// `base` adapted to this scheme.
    pub fn scenario(&self, base: &Scenario) -> Scenario {
        let mut scn = base.clone();
        scn.ris_kind = self.ris_kind();
        if let Scheme::Active { p_max: Some(p) } = self {
            scn.p_max = *p;
        }
        scn
    }

    fn random_rho(&self) -> bool {
        matches!(self, Scheme::ActiveRandomRho | Scheme::PassiveRandomRho)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Active { p_max: None } => write!(f, "active"),
            Scheme::Active { p_max: Some(p) } => write!(f, "active:{}", p * 1e3),
            Scheme::ActiveRandomRho => write!(f, "active_random_rho"),
            Scheme::Passive => write!(f, "passive"),
            Scheme::PassiveRandomRho => write!(f, "passive_random_rho"),
            Scheme::PassiveRandomPhase => write!(f, "passive_random_phase"),
            Scheme::NoRis => write!(f, "no_ris"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    /// `active`, `active:<p_max in mW>`, `active_random_rho`, `passive`,
    /// `passive_random_rho`, `passive_random_phase`, `no_ris`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("active:") {
            let mw: f64 = p.parse().map_err(|_| format!("bad reflect budget in scheme `{s}`"))?;
            if !(mw > 0.0 && mw.is_finite()) {
                return Err(format!("reflect budget in scheme `{s}` must be positive"));
            }
            return Ok(Scheme::Active { p_max: Some(mw * 1e-3) });
        }
        Ok(match s {
            "active" => Scheme::Active { p_max: None },
            "active_random_rho" => Scheme::ActiveRandomRho,
            "passive" => Scheme::Passive,
            "passive_random_rho" => Scheme::PassiveRandomRho,
            "passive_random_phase" => Scheme::PassiveRandomPhase,
            "no_ris" => Scheme::NoRis,
            _ => return Err(format!("unknown scheme `{s}`")),
        })
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Relative change of `f1` fell below `zeta`, or a step could not
    /// improve `f1`.
    Converged,
    /// The outer iteration cap was reached.
    MaxIterations,
    /// A stage failed; the last accepted iterate is returned.
    Stalled,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::Stalled => "stalled",
        })
    }
}

/// RIS-stage diagnostics of one outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct RisStep {
    pub sca_iterations: usize,
    pub solver_iterations: usize,
    pub inexact_solves: usize,
    pub converged: bool,
    /// Fraction of the move toward the extracted vector that was kept.
    pub step: f64,
    pub rank_gap: f64,
    pub penalty_history: Vec<f64>,
    pub tau: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    /// `sum_k |w_k|^2` (W).
    pub f1: f64,
    pub reflect_w: f64,
    pub total_w: f64,
    /// Largest `lambda_2 / lambda_1` over the beamformer Gram matrices.
    pub w_rank_residual: f64,
    pub bf_fallback: bool,
    pub audit_ok: bool,
    /// RIS stage that produced this iterate (absent for iteration 0).
    pub ris: Option<RisStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub scheme: Scheme,
    pub seed: u64,
    pub status: RunStatus,
    pub records: Vec<IterRecord>,
    /// Steps discarded because they would have increased `f1`.
    pub rejected_steps: usize,
    /// Failure that stopped a stalled run.
    pub stall_reason: Option<String>,
    /// Share of active elements with amplitude below one.
    pub sub_unit_fraction: f64,
    pub wall_ms: f64,
}

impl RunTrace {
    /// Completed outer iterations.
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn f1(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f1).collect()
    }

    /// Every step decreases `f1` up to [`MONOTONE_TOL`].
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].f1 <= w[0].f1 * (1.0 + MONOTONE_TOL))
    }

    /// Rank gap of the lifted RIS matrix behind the final iterate.
    pub fn final_t_rank_gap(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.ris.as_ref().map(|s| s.rank_gap))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub sol: BfSolution,
    pub theta: RisVector,
    pub audit: Audit,
    pub trace: RunTrace,
}

impl RunOutcome {
    /// Converged and feasible on the channels it was designed for.
    pub fn converged(&self) -> bool {
        self.trace.status == RunStatus::Converged && self.audit.feasible()
    }
}

/// Uniform phases of the scheme-independent stream of `seed`.
pub fn random_phases(n: usize, seed: u64) -> RisVector {
    let mut rng = seeds::rng(seed, "phase");
    let phases: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    RisVector::from_phases(&phases)
}

/// PS ratios drawn uniformly in [0.1, 0.9].
pub fn random_rho(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed, "rho");
    (0..k).map(|_| rng.random_range(0.1..0.9)).collect()
}

fn record(
    ch: &ChannelSet,
    scn: &Scenario,
    iteration: usize,
    theta: &RisVector,
    r: &crate::bf_stage::P3Result,
    ris: Option<RisStep>,
) -> Result<IterRecord, BcdError> {
    let audit = metrics::audit(ch, theta, &r.sol, scn)?;
    Ok(IterRecord {
        iteration,
        f1: r.objective,
        reflect_w: audit.reflect_w,
        total_w: r.objective + audit.reflect_w,
        w_rank_residual: r.rank_residual.iter().cloned().fold(0.0, f64::max),
        bf_fallback: r.fallback,
        audit_ok: audit.feasible(),
        ris,
    })
}

fn first_solve(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, rho: &RhoMode) -> Result<crate::bf_stage::P3Result, BcdError> {
    solve_p3(ch, theta, scn, rho).map_err(|e| match e {
        StageError::Infeasible { class } => BcdError::Infeasible { class },
        e => e.into(),
    })
}

/// Starting RIS vector and its beamforming solution. Active surfaces use
/// random phases with the largest common amplitude that the reflect budget
/// allows at the direct-link beamformers; the amplitude is reduced while
/// the beamforming stage is infeasible.
fn initialize(
    ch: &ChannelSet,
    scn: &Scenario,
    seed: u64,
    rho: &RhoMode,
) -> Result<(RisVector, crate::bf_stage::P3Result), BcdError> {
    let n = ch.n();
    let phases = random_phases(n, seed);
    match scn.ris_kind {
        RisKind::None => unreachable!("no surface to initialize"),
        RisKind::Passive => {
            let r = first_solve(ch, &phases, scn, rho)?;
            Ok((phases, r))
        }
        RisKind::Active => {
            let off = RisVector::zeros(n);
            let direct = first_solve(ch, &off, scn, rho)?;
            let load: f64 = direct.sol.w.iter().map(|w| (&ch.g * w).norm_squared()).sum::<f64>() + n as f64 * scn.sigma2_v;
            let mut a2 = scn.p_max / load;
            for _ in 0..10 {
                let theta = RisVector::new(&phases.theta * crate::Complex64::new(a2.sqrt(), 0.0));
                match solve_p3(ch, &theta, scn, rho) {
                    Ok(r) => return Ok((theta, r)),
                    Err(StageError::Infeasible { .. }) => a2 /= 4.0,
                    Err(e) => return Err(e.into()),
                }
            }
            Ok((off, direct))
        }
    }
}

/// Alternating optimization on `ch` for the surface kind of `scn`.
pub fn bcd_solve(ch: &ChannelSet, scn: &Scenario, seed: u64, rho: &RhoMode) -> Result<RunOutcome, BcdError> {
    let fixed = matches!(rho, RhoMode::Fixed(_));
    let scheme = match (scn.ris_kind, fixed) {
        (RisKind::Active, false) => Scheme::Active { p_max: None },
        (RisKind::Active, true) => Scheme::ActiveRandomRho,
        (RisKind::Passive, false) => Scheme::Passive,
        (RisKind::Passive, true) => Scheme::PassiveRandomRho,
        (RisKind::None, _) => Scheme::NoRis,
    };
    bcd_run(ch, scn, seed, rho, scheme)
}

fn bcd_run(ch: &ChannelSet, scn: &Scenario, seed: u64, rho: &RhoMode, scheme: Scheme) -> Result<RunOutcome, BcdError> {
    let start = Instant::now();
    scn.validate()?;
    if ch.k() != scn.k || ch.m() != scn.m {
        return Err(BcdError::Invalid("channels do not match the scenario".into()));
    }
    let mut trace = RunTrace {
        scheme,
        seed,
        status: RunStatus::Converged,
        records: Vec::new(),
        rejected_steps: 0,
        stall_reason: None,
        sub_unit_fraction: 0.0,
        wall_ms: 0.0,
    };

    let no_surface = scn.ris_kind == RisKind::None || ch.n() == 0;
    let (ch_used, mut theta, mut current) = if no_surface {
        let ch0 = ch.without_ris();
        let theta = RisVector::zeros(0);
        let r = first_solve(&ch0, &theta, scn, rho)?;
        (ch0, theta, r)
    } else {
        let (theta, r) = initialize(ch, scn, seed, rho)?;
        (ch.clone(), theta, r)
    };
    let ch = &ch_used;
    trace.records.push(record(ch, scn, 0, &theta, &current, None)?);

    if !no_surface {
        trace.status = RunStatus::MaxIterations;
        for i in 1..=scn.tuning.max_outer {
            let step = match ippa(ch, scn, &theta, &current.sol) {
                Ok(s) => s,
                Err(e) => {
                    trace.status = RunStatus::Stalled;
                    trace.stall_reason = Some(format!("RIS stage: {e}"));
                    break;
                }
            };
            let next = match solve_p3(ch, &step.theta, scn, rho) {
                Ok(r) => r,
                Err(e) => {
                    trace.status = RunStatus::Stalled;
                    trace.stall_reason = Some(format!("beamforming stage: {e}"));
                    break;
                }
            };
            let prev = current.objective;
            if next.objective > prev * (1.0 + MONOTONE_TOL) {
                trace.rejected_steps += 1;
                trace.status = RunStatus::Converged;
                break;
            }
            let ris = RisStep {
                sca_iterations: step.iterations,
                solver_iterations: step.solver_iterations,
                inexact_solves: step.inexact_solves,
                converged: step.converged,
                step: step.step,
                rank_gap: step.rank_gap,
                penalty_history: step.penalty_history.clone(),
                tau: step.tau.clone(),
                delta: step.delta.clone(),
            };
            theta = step.theta;
            current = next;
            trace.records.push(record(ch, scn, i, &theta, &current, Some(ris))?);
            if (prev - current.objective).abs() < scn.zeta * prev.abs() {
                trace.status = RunStatus::Converged;
                break;
            }
        }
    }

    let audit = metrics::audit(ch, &theta, &current.sol, scn)?;
    if scn.ris_kind == RisKind::Active && !theta.is_empty() {
        trace.sub_unit_fraction = theta.theta.iter().filter(|z| z.norm() < 1.0).count() as f64 / theta.len() as f64;
    }
    trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(RunOutcome { sol: current.sol, theta, audit, trace })
}

/// Runs `scheme` on `ch` (channels generated with the surface present).
pub fn run_scheme(scheme: Scheme, ch: &ChannelSet, base: &Scenario, seed: u64) -> Result<RunOutcome, BcdError> {
    let scn = scheme.scenario(base);
    let rho = if scheme.random_rho() { RhoMode::Fixed(random_rho(scn.k, seed)) } else { RhoMode::Optimize };
    match scheme {
        Scheme::PassiveRandomPhase => {
            let start = Instant::now();
            scn.validate()?;
            let theta = random_phases(ch.n(), seed);
            let r = first_solve(ch, &theta, &scn, &rho)?;
            let audit = metrics::audit(ch, &theta, &r.sol, &scn)?;
            let trace = RunTrace {
                scheme,
                seed,
                status: RunStatus::Converged,
                records: vec![record(ch, &scn, 0, &theta, &r, None)?],
                rejected_steps: 0,
                stall_reason: None,
                sub_unit_fraction: 0.0,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            Ok(RunOutcome { sol: r.sol, theta, audit, trace })
        }
        _ => bcd_run(ch, &scn, seed, &rho, scheme),
    }
}

/// Scenario axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    M,
    N,
    /// CSI error level.
    Xi,
    /// Reflect budget, values in mW.
    PMax,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::M => "M",
            Axis::N => "N",
            Axis::Xi => "xi",
            Axis::PMax => "p_max",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "M" => Axis::M,
            "N" => Axis::N,
            "xi" => Axis::Xi,
            "p_max" => Axis::PMax,
            other => return Err(format!("unknown axis `{other}` (expected M, N, xi or p_max)")),
        })
    }
}

impl Serialize for Axis {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Axis {
    /// `base` with the axis set to `value`, and the CSI error level.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<(Scenario, f64), BcdError> {
        let mut scn = base.clone();
        let count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(BcdError::Invalid(format!("{self} must be a non-negative integer, got {v}")))
            }
        };
        let mut xi = 0.0;
        match self {
            Axis::M => scn.m = count(value)?,
            Axis::N => scn.n = count(value)?,
            Axis::Xi => xi = value,
            Axis::PMax => scn.p_max = value * 1e-3,
        }
        scn.validate()?;
        Ok((scn, xi))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed0: u64,
    pub schemes: Vec<Scheme>,
    pub workers: usize,
}

/// Result of one (axis value, trial, scheme) cell entry.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub axis: Axis,
    pub axis_value: f64,
    pub trial: usize,
    /// Channel seed of the trial, shared by all schemes and axis values.
    pub seed: u64,
    /// `converged`, `max_iterations`, `stalled`, `infeasible` or `error`.
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub f1_w: f64,
    pub reflect_w: f64,
    pub total_w: f64,
    pub min_sinr_margin: f64,
    pub min_eh_margin: f64,
    /// With CSI errors: whether the design also satisfies every constraint
    /// on the true channels.
    pub true_feasible: Option<bool>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl SweepRow {
    /// Usable for averaging: a feasible audited design.
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.status != "stalled"
    }
}

/// Runs one sweep entry. Channels depend only on `(seed0, trial)` and the
/// scenario dimensions, so all schemes and CSI levels of a trial see the
/// same realization.
pub fn run_trial(base: &Scenario, axis: Axis, value: f64, trial: usize, seed0: u64, scheme: Scheme) -> SweepRow {
    let seed = seeds::trial_seed(seed0, trial as u64);
    let start = Instant::now();
    let mut row = SweepRow {
        scheme,
        axis,
        axis_value: value,
        trial,
        seed,
        status: "error".into(),
        converged: false,
        iterations: 0,
        f1_w: f64::NAN,
        reflect_w: f64::NAN,
        total_w: f64::NAN,
        min_sinr_margin: f64::NAN,
        min_eh_margin: f64::NAN,
        true_feasible: None,
        wall_ms: 0.0,
        error: None,
    };
    let result = (|| -> Result<(RunOutcome, Option<bool>), BcdError> {
        let (scn, xi) = axis.apply(base, value)?;
        let gen_scn = Scenario { ris_kind: RisKind::Active, ..scn.clone() };
        let truth = gen_channels(&gen_scn, seed)?;
        let design = if xi > 0.0 { perturb_csi(&truth, xi, seeds::derive(seed, &[seeds::tag("csi")]))? } else { truth.clone() };
        let out = run_scheme(scheme, &design, &scn, seed)?;
        let true_ok = if xi > 0.0 {
            let scheme_scn = scheme.scenario(&scn);
            let ch = if scheme_scn.ris_kind == RisKind::None { truth.without_ris() } else { truth };
            Some(metrics::audit(&ch, &out.theta, &out.sol, &scheme_scn)?.feasible())
        } else {
            None
        };
        Ok((out, true_ok))
    })();
    match result {
        Ok((out, true_ok)) => {
            row.status = out.trace.status.to_string();
            row.converged = out.converged();
            row.iterations = out.trace.outer_iterations();
            row.f1_w = out.audit.bs_w;
            row.reflect_w = out.audit.reflect_w;
            row.total_w = out.audit.total_w;
            row.min_sinr_margin = out.audit.min_sinr_margin();
            row.min_eh_margin = out.audit.min_eh_margin();
            row.true_feasible = true_ok;
            if !out.audit.feasible() {
                row.error = Some("final design failed the feasibility audit".into());
            }
        }
        Err(BcdError::Infeasible { class }) => {
            row.status = "infeasible".into();
            row.error = Some(format!("infeasible ({class:?} constraints)"));
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Runs every (value, trial, scheme) entry of `spec` on a pool of
/// `spec.workers` threads. Rows reach `on_row` and the returned vector in
/// (value, trial, scheme) order regardless of completion order.
pub fn sweep(base: &Scenario, spec: &SweepSpec, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>, BcdError> {
    if spec.values.is_empty() || spec.trials == 0 || spec.schemes.is_empty() {
        return Err(BcdError::Invalid("a sweep needs at least one value, one trial and one scheme".into()));
    }
    for &v in &spec.values {
        spec.axis.apply(base, v)?;
    }
    let mut jobs = Vec::new();
    for &v in &spec.values {
        for t in 0..spec.trials {
            for &s in &spec.schemes {
                jobs.push((v, t, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| BcdError::Invalid(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, SweepRow)>();
    let mut rows = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| {
        let jobs = &jobs;
        scope.spawn(move || {
            pool.install(|| {
                use rayon::prelude::*;
                (0..jobs.len()).into_par_iter().for_each_with(tx, |tx, i| {
                    let (v, t, s) = jobs[i];
                    let row = run_trial(base, spec.axis, v, t, spec.seed0, s);
                    let _ = tx.send((i, row));
                });
            });
        });
        let mut pending = BTreeMap::new();
        for (i, row) in rx {
            pending.insert(i, row);
            while let Some(row) = pending.remove(&rows.len()) {
                on_row(&row);
                rows.push(row);
            }
        }
    });
    Ok(rows)
}

/// Mean and 95% confidence half-width (Student t).
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
    (mean, t * (var / n as f64).sqrt())
}

/// Aggregate of one (scheme, axis value) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub scheme: Scheme,
    pub axis_value: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_total_w: f64,
    pub ci95_total_w: f64,
    pub mean_f1_w: f64,
    pub mean_reflect_w: f64,
    pub mean_iterations: f64,
    /// More than half of the trials failed.
    pub flagged: bool,
}

/// Per-cell means over usable rows, in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut cells: BTreeMap<(String, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.scheme.to_string(), r.axis_value.to_bits());
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &cells[&key];
            let ok: Vec<&&SweepRow> = rs.iter().filter(|r| r.ok()).collect();
            let col = |f: fn(&SweepRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (mean_total_w, ci95_total_w) = mean_ci95(&col(|r| r.total_w));
            let mean = |v: Vec<f64>| mean_ci95(&v).0;
            let failures = rs.len() - ok.len();
            CellSummary {
                scheme: rs[0].scheme,
                axis_value: rs[0].axis_value,
                trials: rs.len(),
                failures,
                mean_total_w,
                ci95_total_w,
                mean_f1_w: mean(col(|r| r.f1_w)),
                mean_reflect_w: mean(col(|r| r.reflect_w)),
                mean_iterations: mean(col(|r| r.iterations as f64)),
                flagged: 2 * failures > rs.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        let s: Scheme = "active:15".parse().unwrap();
        assert_eq!(s, Scheme::Active { p_max: Some(15e-3) });
        assert_eq!(s.to_string(), "active:15");
        assert!("active:-1".parse::<Scheme>().is_err());
        assert!("bogus".parse::<Scheme>().is_err());
    }

    #[test]
    fn confidence_interval_matches_t_table() {
        // n = 5, sample sd = 1: t_{0.975, 4} = 2.7764
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let sd = (xs.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        let (m, h) = mean_ci95(&xs.map(|x| x / sd));
        assert!(m.abs() < 1e-15);
        assert!((h - 2.776_445 / 5f64.sqrt()).abs() < 1e-5, "{h}");
    }

    #[test]
    fn no_surface_runs_a_single_solve() {
        let scn = Scenario { n: 0, ..Scenario::default() };
        let ch = gen_channels(&scn, 3).unwrap();
        let out = run_scheme(Scheme::Active { p_max: None }, &ch, &scn, 3).unwrap();
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.trace.outer_iterations(), 0);
        assert!(out.converged());
        assert_eq!(out.audit.reflect_w, 0.0);
    }

    #[test]
    fn random_draws_are_shared_across_schemes() {
        assert_eq!(random_phases(8, 4), random_phases(8, 4));
        let rho = random_rho(4, 4);
        assert!(rho.iter().all(|r| (0.1..0.9).contains(r)));
        assert_ne!(rho, random_rho(4, 5));
    }
}

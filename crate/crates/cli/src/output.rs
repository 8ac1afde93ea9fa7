//! CSV and JSON serializers.
//!
//! Numbers use Rust's `Display` for `f64`: shortest round-trip decimal, no
//! exponent, no grouping, independent of the process locale. Missing values
//! are empty cells.

use std::io::Write;

use ris_swipt::bcd::{CellSummary, RunOutcome, RunTrace, Scheme, SweepRow};
use ris_swipt::config::SCHEMA_VERSION;
use ris_swipt::scene::Scenario;
use serde::Serialize;

pub const SWEEP_HEADER: [&str; 14] = [
    "schema_version",
    "scheme",
    "axis",
    "axis_value",
    "trial",
    "seed",
    "converged",
    "iterations",
    "f1_W",
    "reflect_W",
    "total_W",
    "min_sinr_margin",
    "min_eh_margin",
    "wall_ms",
];

pub const CONVERGENCE_HEADER: [&str; 9] =
    ["schema_version", "p_max_mW", "seed_index", "seed", "iteration", "f1_W", "reflect_W", "total_W", "status"];

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Row writer that flushes after every record, so an interrupted sweep
/// leaves every finished row on disk.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W, header: &[&str]) -> csv::Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        inner.write_record(header)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, fields: &[String]) -> csv::Result<()> {
        self.inner.write_record(fields)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn sweep_fields(row: &SweepRow, timing: bool) -> Vec<String> {
    vec![
        SCHEMA_VERSION.to_string(),
        row.scheme.to_string(),
        row.axis.to_string(),
        num(row.axis_value),
        row.trial.to_string(),
        row.seed.to_string(),
        row.converged.to_string(),
        row.iterations.to_string(),
        num(row.f1_w),
        num(row.reflect_w),
        num(row.total_w),
        num(row.min_sinr_margin),
        num(row.min_eh_margin),
        if timing { num(row.wall_ms) } else { String::new() },
    ]
}

pub fn convergence_fields(p_max_mw: f64, seed_index: usize, trace: &RunTrace) -> Vec<Vec<String>> {
    trace
        .records
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                num(p_max_mw),
                seed_index.to_string(),
                trace.seed.to_string(),
                r.iteration.to_string(),
                num(r.f1),
                num(r.reflect_w),
                num(r.total_w),
                trace.status.to_string(),
            ]
        })
        .collect()
}

/// Flat summary of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub scheme: Scheme,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub f1_w: f64,
    pub reflect_w: f64,
    pub total_w: f64,
    pub sinr_margin: Vec<f64>,
    pub eh_margin: Vec<f64>,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn new(scn: &Scenario, out: &RunOutcome) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: out.trace.scheme.scenario(scn),
            scheme: out.trace.scheme,
            axis_value: None,
            seed: out.trace.seed,
            converged: out.converged(),
            iterations: out.trace.outer_iterations(),
            f1_w: out.audit.bs_w,
            reflect_w: out.audit.reflect_w,
            total_w: out.audit.total_w,
            sinr_margin: out.audit.sinr_margin.clone(),
            eh_margin: out.audit.eh_margin.clone(),
            wall_ms: out.trace.wall_ms,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub record: RunRecord,
    /// Non-increasing by construction of the driver.
    pub f1: Vec<f64>,
    pub trace: &'a RunTrace,
    pub design: &'a RunOutcome,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary<'a> {
    pub schema_version: u32,
    pub axis: String,
    pub values: &'a [f64],
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<String>,
    pub cells: Vec<CellSummary>,
}

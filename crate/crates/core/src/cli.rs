//! Command implementations behind the `esc` binary.
//!
//! Each command writes its artifacts into an output directory and returns
//! an [`Outcome`]; errors returned from here are configuration or I/O
//! problems. Exit codes: 0 success, 1 configuration error, 2 numerical
//! abort.

use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::esc::Variant;
use crate::io::{emit_csv, write_json};
use crate::metrics::{bound_fit, BoundFit, RunMetrics};
use crate::sim::{run_scenario, run_unchecked, RunError, Scenario, TrajectoryRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Aborted,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Completed => EXIT_OK,
            Outcome::Aborted => EXIT_ABORT,
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        if self == Outcome::Aborted || other == Outcome::Aborted {
            Outcome::Aborted
        } else {
            Outcome::Completed
        }
    }
}

/// Finished or aborted run.
pub struct Execution {
    pub record: TrajectoryRecord,
    pub error: Option<Error>,
}

impl Execution {
    pub fn outcome(&self) -> Outcome {
        if self.error.is_some() {
            Outcome::Aborted
        } else {
            Outcome::Completed
        }
    }
}

/// Runs one scenario. Configuration problems are returned as `Err`;
/// numerical aborts come back as an [`Execution`] holding the partial
/// record.
pub fn execute(scenario: &Scenario, forced: bool) -> Result<Execution> {
    let result = if forced {
        run_unchecked(scenario)
    } else {
        run_scenario(scenario)
    };
    match result {
        Ok(record) => Ok(Execution {
            record,
            error: None,
        }),
        Err(RunError::Aborted { partial, source }) => Ok(Execution {
            record: *partial,
            error: Some(source),
        }),
        Err(RunError::Invalid(e)) => Err(e),
    }
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub rng: String,
    pub scenario_hash: String,
    pub rows: usize,
    pub measurement_updates: usize,
    pub min_covariance_eigenvalue: Option<f64>,
    pub max_covariance_asymmetry: Option<f64>,
    pub warnings: Vec<String>,
    pub metrics: Option<RunMetrics>,
    /// Fully resolved scenario; feeding it back reproduces the run.
    pub scenario: Scenario,
}

fn summarize(cfg: &Config, name: &str, sc: &Scenario, ex: &Execution) -> RunSummary {
    let metrics = if ex.record.samples.is_empty() {
        None
    } else {
        RunMetrics::compute(&ex.record, sc, &cfg.metrics).ok()
    };
    let m = &ex.record.meta;
    RunSummary {
        name: name.to_string(),
        status: match ex.outcome() {
            Outcome::Completed => "completed",
            Outcome::Aborted => "aborted",
        },
        error: ex.error.as_ref().map(ToString::to_string),
        seed: sc.seed,
        rng: m.rng.clone(),
        scenario_hash: m.scenario_hash.clone(),
        rows: ex.record.samples.len(),
        measurement_updates: m.measurement_updates,
        min_covariance_eigenvalue: m.min_covariance_eigenvalue,
        max_covariance_asymmetry: m.max_covariance_asymmetry,
        warnings: cfg.warnings.get(name).cloned().unwrap_or_default(),
        metrics,
        scenario: sc.clone(),
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Writes `<name>_trajectory.csv` and `<name>_summary.json`.
pub fn cmd_run(cfg: &Config, name: &str, out: &Path) -> Result<Outcome> {
    let sc = cfg.scenario(name)?;
    ensure_dir(out)?;
    let ex = execute(sc, cfg.forced)?;
    if let Some(e) = &ex.error {
        log::error!("{name}: {e}");
    }
    emit_csv(&ex.record, &out.join(format!("{name}_trajectory.csv")))?;
    write_json(&summarize(cfg, name, sc, &ex), &out.join(format!("{name}_summary.json")))?;
    Ok(ex.outcome())
}

#[derive(Debug, Serialize)]
pub struct Deltas {
    /// `a - b`; absent when either run never settles.
    pub convergence_time: Option<f64>,
    pub path_length: f64,
    pub path_to_entry: Option<f64>,
    pub final_distance: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub a: RunSummary,
    pub b: RunSummary,
    pub deltas: Option<Deltas>,
    pub attenuation_ratio_a: Option<[f64; 2]>,
    pub attenuation_ratio_b: Option<[f64; 2]>,
}

fn opt_sub(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Runs `a` and `b` side by side and writes `compare_<a>_<b>.json`.
pub fn cmd_compare(cfg: &Config, a: &str, b: &str, out: &Path) -> Result<Outcome> {
    let (sa, sb) = (cfg.scenario(a)?, cfg.scenario(b)?);
    if sa.field != sb.field {
        return Err(Error::Config(format!("`{a}` and `{b}` use different fields")));
    }
    if sa.initial_position != sb.initial_position {
        return Err(Error::Config(format!(
            "`{a}` and `{b}` start from different positions"
        )));
    }
    ensure_dir(out)?;
    let (ea, eb) = std::thread::scope(|s| {
        let ha = s.spawn(|| execute(sa, cfg.forced));
        let eb = execute(sb, cfg.forced);
        (ha.join().expect("comparison run panicked"), eb)
    });
    let (ea, eb) = (ea?, eb?);
    let (ma, mb) = (summarize(cfg, a, sa, &ea), summarize(cfg, b, sb, &eb));
    let deltas = match (&ma.metrics, &mb.metrics) {
        (Some(x), Some(y)) => Some(Deltas {
            convergence_time: opt_sub(x.convergence_time, y.convergence_time),
            path_length: x.path_length - y.path_length,
            path_to_entry: opt_sub(x.path_to_entry, y.path_to_entry),
            final_distance: x.final_distance - y.final_distance,
        }),
        _ => None,
    };
    let report = Comparison {
        attenuation_ratio_a: ma.metrics.as_ref().map(|m| m.attenuation_ratio),
        attenuation_ratio_b: mb.metrics.as_ref().map(|m| m.attenuation_ratio),
        a: ma,
        b: mb,
        deltas,
    };
    write_json(&report, &out.join(format!("compare_{a}_{b}.json")))?;
    Ok(ea.outcome().worst(eb.outcome()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoundCheckOptions {
    /// Replace the recorded `J` with this constant before fitting.
    pub inject_constant_j: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundCurvePoint {
    pub t: f64,
    pub j_x: f64,
    pub j_y: f64,
    pub bound_x: Option<f64>,
    pub bound_y: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub tail_fraction: f64,
    pub channels: [BoundFit; 2],
    pub curve: Vec<BoundCurvePoint>,
}

const BOUND_CURVE_POINTS: usize = 1000;

pub fn bound_report(name: &str, record: &TrajectoryRecord, tail_fraction: f64) -> BoundReport {
    let times = record.times();
    let channels = [0, 1].map(|i| {
        let j: Vec<f64> = record.samples.iter().map(|s| s.j[i]).collect();
        bound_fit(&times, &j, tail_fraction)
    });
    let stride = (record.samples.len() / BOUND_CURVE_POINTS).max(1);
    let curve = record
        .samples
        .iter()
        .step_by(stride)
        .filter(|s| s.t > 0.0)
        .map(|s| BoundCurvePoint {
            t: s.t,
            j_x: s.j[0].abs(),
            j_y: s.j[1].abs(),
            bound_x: channels[0].p.map(|p| s.t.powf(-p)),
            bound_y: channels[1].p.map(|p| s.t.powf(-p)),
        })
        .collect();
    BoundReport {
        name: name.to_string(),
        tail_fraction,
        channels,
        curve,
    }
}

/// Runs a filter-driven scenario and writes `bound_<name>.json`.
pub fn cmd_bound_check(
    cfg: &Config,
    name: &str,
    out: &Path,
    opts: BoundCheckOptions,
) -> Result<Outcome> {
    let sc = cfg.scenario(name)?;
    if sc.esc.variant != Variant::GekfAdaptive {
        return Err(Error::Config("bound check requires GEKF variant".into()));
    }
    ensure_dir(out)?;
    let mut ex = execute(sc, cfg.forced)?;
    if let Some(j) = opts.inject_constant_j {
        ex.record.samples.iter_mut().for_each(|s| s.j = [j, j]);
    }
    let report = bound_report(name, &ex.record, cfg.metrics.bound_tail_fraction);
    for (axis, c) in ["x", "y"].iter().zip(&report.channels) {
        log::info!("{name} J_{axis}: p = {:?}, t* = {:?}, satisfied = {}", c.p, c.t_star, c.satisfied);
    }
    write_json(&report, &out.join(format!("bound_{name}.json")))?;
    Ok(ex.outcome())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Omega,
    Lambda,
}

impl SweepParam {
    fn label(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub summary: RunSummary,
}

/// Reruns `name` once per value and writes `sweep_<name>_<param>.json`.
pub fn cmd_sweep(
    cfg: &Config,
    name: &str,
    param: SweepParam,
    values: &[f64],
    out: &Path,
) -> Result<Outcome> {
    let base = cfg.scenario(name)?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut scenarios = Vec::with_capacity(values.len());
    for &v in values {
        let mut sc = base.clone();
        match param {
            SweepParam::Omega => sc.esc.omega = v,
            SweepParam::Lambda => sc.esc.lambda = [v, v],
        }
        if !cfg.forced {
            sc = sc
                .resolve()
                .map_err(|e| Error::Config(format!("{} = {v}: {e}", param.label())))?
                .0;
        }
        scenarios.push(sc);
    }
    ensure_dir(out)?;
    let runs: Vec<Result<Execution>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || execute(sc, cfg.forced)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep run panicked"))
            .collect()
    });
    let mut outcome = Outcome::Completed;
    let mut entries = Vec::with_capacity(values.len());
    for ((v, sc), ex) in values.iter().zip(&scenarios).zip(runs) {
        let ex = ex?;
        outcome = outcome.worst(ex.outcome());
        entries.push(SweepEntry {
            value: *v,
            summary: summarize(cfg, name, sc, &ex),
        });
    }
    write_json(&entries, &out.join(format!("sweep_{name}_{}.json", param.label())))?;
    Ok(outcome)
}

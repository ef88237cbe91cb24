//! Experiment configuration files and the (K1, K2) sweep.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run, Policy, SimConfig, SimError};
use crate::forecast::EvalSeries;
use crate::par::{self, Parallelism};
use crate::report::SimulationReport;
use crate::workload::{WorkloadConfig, WorkloadTrace};

/// Environment variable overriding the workload seed.
pub const SEED_ENV: &str = "SHAPESIM_SEED";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{SEED_ENV} must be an unsigned integer, got {0:?}")]
    Seed(String),
    #[error("run at k1={k1}, k2={k2} failed: {source}")]
    Cell { k1: f64, k2: f64, source: SimError },
    #[error("baseline run failed: {0}")]
    Baseline(SimError),
    #[error("no application completed at {0}")]
    NoCompletions(String),
}

/// Top-level configuration file: workload generation plus simulation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub sim: SimConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads `path` and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
        let mut config = Self::from_json(&text)
            .map_err(|source| ExperimentError::Parse { path: path.display().to_string(), source })?;
        config.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(config)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ExperimentError> {
        if let Some(v) = value {
            self.workload.rng_seed = v.trim().parse().map_err(|_| ExperimentError::Seed(v.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepMetrics {
    /// Baseline mean turnaround over this run's mean turnaround.
    pub turnaround_ratio: f64,
    pub mem_slack: f64,
    pub cpu_slack: f64,
    pub failure_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub k1: f64,
    pub k2: f64,
    #[serde(flatten)]
    pub metrics: SweepMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub baseline: SweepMetrics,
    /// Row-major over (k1, k2) in the order given.
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_CSV_HEADER: &str = "k1,k2,turnaround_ratio,mem_slack,cpu_slack,failure_pct";

impl SweepResult {
    pub fn cell(&self, k1: f64, k2: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.k1 == k1 && c.k2 == k2)
    }

    /// Header, the baseline reference row (`k1` = `baseline`), then one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        let b = &self.baseline;
        out.push_str(&format!("baseline,,{},{},{},{}\n", b.turnaround_ratio, b.mem_slack, b.cpu_slack, b.failure_pct));
        for c in &self.cells {
            let m = &c.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.k1, c.k2, m.turnaround_ratio, m.mem_slack, m.cpu_slack, m.failure_pct
            ));
        }
        out
    }
}

fn mean_turnaround(report: &SimulationReport, label: &str) -> Result<f64, ExperimentError> {
    report.aggregates().mean_turnaround_s.ok_or_else(|| ExperimentError::NoCompletions(label.to_string()))
}

fn metrics(baseline_mean: f64, report: &SimulationReport, label: &str) -> Result<SweepMetrics, ExperimentError> {
    let a = report.aggregates();
    Ok(SweepMetrics {
        turnaround_ratio: baseline_mean / mean_turnaround(report, label)?,
        mem_slack: a.mem_slack.unwrap_or(0.0),
        cpu_slack: a.cpu_slack.unwrap_or(0.0),
        failure_pct: a.failure_pct,
    })
}

/// Runs the baseline plus one shaped simulation per (k1, k2) on the same
/// trace. A baseline `base.policy` is treated as pessimistic. The result does
/// not depend on `parallelism`.
pub fn sweep(
    trace: &WorkloadTrace,
    base: &SimConfig,
    k1s: &[f64],
    k2s: &[f64],
    parallelism: Parallelism,
) -> Result<SweepResult, ExperimentError> {
    let shaped_policy = match base.policy {
        Policy::Baseline => Policy::Pessimistic,
        p => p,
    };
    let mut configs = vec![base.clone().with_policy(Policy::Baseline)];
    for &k1 in k1s {
        for &k2 in k2s {
            configs.push(base.clone().with_policy(shaped_policy).with_buffer(k1, k2));
        }
    }
    let reports = par::map(&configs, parallelism, |c| run(trace, c));

    let mut reports = reports.into_iter();
    let baseline = reports.next().expect("baseline is always run").map_err(ExperimentError::Baseline)?;
    let baseline_mean = mean_turnaround(&baseline, "baseline")?;
    let baseline_metrics = metrics(baseline_mean, &baseline, "baseline")?;
    let mut cells = Vec::with_capacity(k1s.len() * k2s.len());
    for &k1 in k1s {
        for &k2 in k2s {
            let report = reports.next().expect("one report per cell").map_err(|source| ExperimentError::Cell {
                k1,
                k2,
                source,
            })?;
            cells.push(SweepCell { k1, k2, metrics: metrics(baseline_mean, &report, &format!("k1={k1}, k2={k2}"))? });
        }
    }
    Ok(SweepResult { baseline: baseline_metrics, cells })
}

/// Memory then cpu usage of every component in `trace`, each scaled by its
/// reservation, as a forecaster evaluation corpus.
pub fn forecast_corpus(trace: &WorkloadTrace) -> Vec<EvalSeries> {
    let mut corpus = Vec::with_capacity(2 * trace.usage.len());
    for app in &trace.applications {
        for c in app.components() {
            let series = trace.series(c.id);
            corpus.push(EvalSeries {
                id: format!("{}/mem", c.id.0),
                values: Arc::from(series.memory()),
                scale: c.reservation.memory,
            });
            corpus.push(EvalSeries {
                id: format!("{}/cpu", c.id.0),
                values: Arc::from(series.cpus()),
                scale: c.reservation.cpus,
            });
        }
    }
    corpus
}

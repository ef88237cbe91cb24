//! Simulation reports, the metrics derived from them, and their file forms.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AppId, AppKind, ResourceVector, SimTime};
use crate::engine::SimConfig;
use crate::stats::{quantile_sorted, Summary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no application completed")]
    NoCompletedApps,
    #[error("no tick samples")]
    NoTicks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppOutcome {
    Finished,
    /// Abandoned after exceeding the resubmission cap.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub id: AppId,
    pub kind: AppKind,
    pub outcome: AppOutcome,
    pub priority_key: SimTime,
    pub first_submission: SimTime,
    /// Time the application first started running.
    pub first_start: Option<SimTime>,
    pub completion: Option<SimTime>,
    pub turnaround: Option<SimTime>,
    pub total_work: f64,
    pub lost_work: f64,
    /// Crashes: memory overrun or an overload kill of a core component.
    pub failure_count: u32,
    /// Full preemptions chosen by the shaper.
    pub preemption_count: u32,
    /// Elastic components lost to preemption, crash or kill.
    pub elastic_losses: u32,
    /// Work credited per component over the run, core first.
    pub ledger: Vec<f64>,
    /// Sums over monitor ticks of the app's allocation and usage.
    pub allocated_sum: ResourceVector,
    pub used_sum: ResourceVector,
}

/// Cluster-wide allocation and usage at one monitor tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub t: SimTime,
    pub allocated: ResourceVector,
    pub used: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub completed: usize,
    pub abandoned: usize,
    pub mean_turnaround_s: Option<f64>,
    pub median_turnaround_s: Option<f64>,
    pub mem_slack: Option<f64>,
    pub cpu_slack: Option<f64>,
    pub failure_pct: f64,
    pub preemption_pct: f64,
    pub lost_work: f64,
}

impl Aggregates {
    pub fn compute(apps: &[AppRecord], ticks: &[TickSample]) -> Self {
        let turnarounds = sorted_turnarounds(apps);
        let (mem_slack, cpu_slack) = cluster_slack(ticks);
        let pct = |n: usize| {
            if apps.is_empty() {
                0.0
            } else {
                n as f64 / apps.len() as f64 * 100.0
            }
        };
        Aggregates {
            completed: turnarounds.len(),
            abandoned: apps.iter().filter(|a| a.outcome == AppOutcome::Failed).count(),
            mean_turnaround_s: crate::stats::mean(&turnarounds),
            median_turnaround_s: quantile_sorted(&turnarounds, 0.5),
            mem_slack,
            cpu_slack,
            failure_pct: pct(apps.iter().filter(|a| a.failure_count >= 1).count()),
            preemption_pct: pct(apps.iter().filter(|a| a.preemption_count >= 1).count()),
            lost_work: apps.iter().map(|a| a.lost_work).sum(),
        }
    }
}

/// Everything a run produces apart from the configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub apps: Vec<AppRecord>,
    pub ticks: Vec<TickSample>,
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl SimulationReport {
    pub fn new(config: SimConfig, apps: Vec<AppRecord>, ticks: Vec<TickSample>) -> Self {
        let aggregates = Aggregates::compute(&apps, &ticks);
        SimulationReport { config, outcome: Outcome { apps, ticks, aggregates } }
    }

    pub fn apps(&self) -> &[AppRecord] {
        &self.outcome.apps
    }

    pub fn ticks(&self) -> &[TickSample] {
        &self.outcome.ticks
    }

    pub fn aggregates(&self) -> &Aggregates {
        &self.outcome.aggregates
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Serialization without the configuration echo, for comparing runs
    /// that differ only in configuration.
    pub fn outcome_json(&self) -> String {
        serde_json::to_string_pretty(&self.outcome).expect("outcome serializes")
    }

    /// True when the aggregate block matches a recomputation from the raw records.
    pub fn is_self_consistent(&self) -> bool {
        Aggregates::compute(&self.outcome.apps, &self.outcome.ticks) == self.outcome.aggregates
    }
}

fn sorted_turnarounds(apps: &[AppRecord]) -> Vec<f64> {
    let mut t: Vec<f64> = apps.iter().filter_map(|a| a.turnaround).map(|t| t as f64).collect();
    t.sort_by(f64::total_cmp);
    t
}

fn slack_ratio(allocated: f64, used: f64) -> Option<f64> {
    (allocated > 0.0).then(|| ((allocated - used) / allocated).clamp(0.0, 1.0))
}

fn cluster_slack(ticks: &[TickSample]) -> (Option<f64>, Option<f64>) {
    let alloc = ticks.iter().fold(ResourceVector::ZERO, |acc, s| acc.add(&s.allocated));
    let used = ticks.iter().fold(ResourceVector::ZERO, |acc, s| acc.add(&s.used));
    (slack_ratio(alloc.memory, used.memory), slack_ratio(alloc.cpus, used.cpus))
}

/// Turnaround (completion minus first submission) over completed apps.
pub fn turnaround_stats(report: &SimulationReport) -> Result<Summary, ReportError> {
    Summary::of(&sorted_turnarounds(report.apps())).ok_or(ReportError::NoCompletedApps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppSlack {
    pub id: AppId,
    pub memory: f64,
    pub cpus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackStats {
    /// Time-aggregated cluster slack.
    pub memory: f64,
    pub cpus: f64,
    pub per_app: Vec<AppSlack>,
    /// Apps never sampled with a non-zero allocation.
    pub exclusions: usize,
}

pub fn slack_stats(report: &SimulationReport) -> Result<SlackStats, ReportError> {
    let (memory, cpus) = cluster_slack(report.ticks());
    let (Some(memory), Some(cpus)) = (memory, cpus) else {
        return Err(ReportError::NoTicks);
    };
    let mut per_app = Vec::new();
    let mut exclusions = 0;
    for a in report.apps() {
        match (
            slack_ratio(a.allocated_sum.memory, a.used_sum.memory),
            slack_ratio(a.allocated_sum.cpus, a.used_sum.cpus),
        ) {
            (Some(memory), Some(cpus)) => per_app.push(AppSlack { id: a.id, memory, cpus }),
            _ => exclusions += 1,
        }
    }
    Ok(SlackStats { memory, cpus, per_app, exclusions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureStats {
    pub failure_pct: f64,
    pub lost_work: f64,
}

pub fn failure_stats(report: &SimulationReport) -> FailureStats {
    let a = Aggregates::compute(report.apps(), &[]);
    FailureStats { failure_pct: a.failure_pct, lost_work: a.lost_work }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub const TICKS_CSV_HEADER: &str = "t,alloc_cpus,alloc_mem_mb,used_cpus,used_mem_mb";
pub const APPS_CSV_HEADER: &str =
    "id,kind,outcome,first_submission,completion,turnaround,failure_count,preemption_count,elastic_losses,lost_work,mem_slack,cpu_slack";

pub fn ticks_csv(report: &SimulationReport) -> String {
    let mut out = String::from(TICKS_CSV_HEADER);
    out.push('\n');
    for s in report.ticks() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.t, s.allocated.cpus, s.allocated.memory, s.used.cpus, s.used.memory
        ));
    }
    out
}

pub fn apps_csv(report: &SimulationReport) -> String {
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    let optf = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(APPS_CSV_HEADER);
    out.push('\n');
    for a in report.apps() {
        let kind = match a.kind {
            AppKind::Rigid => "rigid",
            AppKind::Elastic => "elastic",
        };
        let outcome = match a.outcome {
            AppOutcome::Finished => "finished",
            AppOutcome::Failed => "failed",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            a.id.0,
            kind,
            outcome,
            a.first_submission,
            opt(a.completion),
            opt(a.turnaround),
            a.failure_count,
            a.preemption_count,
            a.elastic_losses,
            a.lost_work,
            optf(slack_ratio(a.allocated_sum.memory, a.used_sum.memory)),
            optf(slack_ratio(a.allocated_sum.cpus, a.used_sum.cpus)),
        ));
    }
    out
}

/// Writes `report.json` content to `path`.
pub fn write_report(report: &SimulationReport, path: &Path) -> io::Result<()> {
    let mut json = report.to_json();
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

/// Writes `ticks.csv` and `apps.csv` into `dir`, creating it if needed.
pub fn write_report_csv(report: &SimulationReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("ticks.csv"), ticks_csv(report).as_bytes())?;
    write_atomic(&dir.join("apps.csv"), apps_csv(report).as_bytes())
}

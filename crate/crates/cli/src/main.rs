//! `shapesim`: generate traces, run simulations, sweep buffer parameters and
//! evaluate forecasters.
//!
//! Exit status is 0 on success, 1 for usage errors (bad arguments, missing or
//! invalid inputs) and 2 for failures while running.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use shapesim::engine::run;
use shapesim::experiment::{forecast_corpus, sweep, ExperimentConfig};
use shapesim::forecast::{evaluate_forecasters, write_eval_csv, ForecasterKind, KernelKind};
use shapesim::par::Parallelism;
use shapesim::report::{write_atomic, write_report, write_report_csv};
use shapesim::workload::{generate, load_trace, write_trace, WorkloadTrace};

#[derive(Debug, Parser)]
#[command(name = "shapesim", version, about = "Cluster simulator with forecast-driven resource shaping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a workload trace directory from a config file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one trace and write report.json.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write ticks.csv and apps.csv into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the baseline plus every (k1, k2) pair and write sweep.csv.
    Sweep {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k1: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        k2: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to all available cores.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        jobs: Option<u32>,
    },
    /// Replay the trace's usage series through forecasters and write error statistics.
    EvalForecast {
        #[arg(long)]
        trace: PathBuf,
        /// Any of gp-exp, gp-rbf, ari, oracle.
        #[arg(long, value_delimiter = ',', required = true)]
        kinds: Vec<String>,
        /// History lengths for the gp kinds.
        #[arg(long, value_delimiter = ',', default_value = "10")]
        h: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let config = ExperimentConfig::load(path).map_err(usage)?;
    config.sim.validate().map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
    Ok(config)
}

fn load_trace_dir(path: &Path) -> Result<WorkloadTrace, Failure> {
    if !path.is_dir() {
        return Err(usage(anyhow!("trace directory {} does not exist", path.display())));
    }
    load_trace(path).with_context(|| format!("cannot load trace {}", path.display())).map_err(runtime)
}

fn gen(config: &Path, out: &Path) -> Outcome {
    let config = load_config(config)?;
    let trace = generate(&config.workload).map_err(usage)?;
    write_trace(&trace, out).map_err(runtime)
}

fn run_one(trace: &Path, config: &Path, out: &Path, csv: Option<&Path>) -> Outcome {
    let config = load_config(config)?;
    let trace = load_trace_dir(trace)?;
    let report = run(&trace, &config.sim).map_err(runtime)?;
    write_report(&report, out).with_context(|| format!("cannot write {}", out.display())).map_err(runtime)?;
    if let Some(dir) = csv {
        write_report_csv(&report, dir)
            .with_context(|| format!("cannot write csv files to {}", dir.display()))
            .map_err(runtime)?;
    }
    Ok(())
}

fn run_sweep(trace: &Path, config: &Path, k1s: &[f64], k2s: &[f64], out: &Path, jobs: Option<u32>) -> Outcome {
    let config = load_config(config)?;
    for &k1 in k1s {
        for &k2 in k2s {
            config.sim.clone().with_buffer(k1, k2).validate().map_err(|e| usage(anyhow!("k1={k1}, k2={k2}: {e}")))?;
        }
    }
    let trace = load_trace_dir(trace)?;
    let parallelism = jobs.map_or(Parallelism::Available, |j| Parallelism::from_jobs(j as usize));
    let result = sweep(&trace, &config.sim, k1s, k2s, parallelism).map_err(runtime)?;
    write_atomic(out, result.to_csv().as_bytes())
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(runtime)
}

fn forecaster_kinds(kinds: &[String], hs: &[usize]) -> anyhow::Result<Vec<ForecasterKind>> {
    if hs.contains(&0) {
        bail!("--h values must be positive");
    }
    let mut out = Vec::new();
    for k in kinds {
        match k.trim() {
            "gp-exp" => out.extend(hs.iter().map(|&h| ForecasterKind::gp(KernelKind::Exponential, h))),
            "gp-rbf" => out.extend(hs.iter().map(|&h| ForecasterKind::gp(KernelKind::Rbf, h))),
            "ari" => out.push(ForecasterKind::ari()),
            "oracle" => out.push(ForecasterKind::Oracle),
            other => bail!("unknown forecaster kind {other:?} (expected gp-exp, gp-rbf, ari or oracle)"),
        }
    }
    Ok(out)
}

fn eval_forecast(trace: &Path, kinds: &[String], hs: &[usize], out: &Path) -> Outcome {
    let kinds = forecaster_kinds(kinds, hs).map_err(usage)?;
    let trace = load_trace_dir(trace)?;
    let corpus = forecast_corpus(&trace);
    let rows = evaluate_forecasters(&corpus, &kinds, Parallelism::Available).map_err(runtime)?;
    let mut csv = Vec::new();
    write_eval_csv(&rows, &mut csv).map_err(runtime)?;
    write_atomic(out, &csv).with_context(|| format!("cannot write {}", out.display())).map_err(runtime)
}

/// The error chain joined by `: `, skipping causes their parent already quotes.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Gen { config, out } => gen(config, out),
        Command::Run { trace, config, out, csv } => run_one(trace, config, out, csv.as_deref()),
        Command::Sweep { trace, config, k1, k2, out, jobs } => run_sweep(trace, config, k1, k2, out, *jobs),
        Command::EvalForecast { trace, kinds, h, out } => eval_forecast(trace, kinds, h, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (code, e) = match failure {
                Failure::Usage(e) => (1, e),
                Failure::Runtime(e) => (2, e),
            };
            let _ = writeln!(std::io::stderr(), "shapesim: {}", render(&e));
            ExitCode::from(code)
        }
    }
}

//! Offline forecaster comparison: replay each series through a streaming
//! forecaster and collect one-step-ahead normalized absolute errors.

use std::io::{self, Write};
use std::sync::Arc;

use super::{ForecastError, Forecaster, ForecasterKind};
use crate::par::{self, Parallelism};
use crate::stats::Summary;

pub const EVAL_CSV_HEADER: &str = "kind,kernel,h,series_id,q1,median,q3,mean,max";

/// A series to replay, normalized by `scale` when scoring errors.
#[derive(Debug, Clone)]
pub struct EvalSeries {
    pub id: String,
    pub values: Arc<[f64]>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub kind: String,
    pub kernel: String,
    pub h: usize,
    /// Series id, or `all` for the pooled row.
    pub series_id: String,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub max: f64,
}

impl EvalRow {
    fn new(kind: &ForecasterKind, series_id: String, s: Summary) -> Self {
        let (kernel, h) = match kind {
            ForecasterKind::Gp(c) => (c.kernel.name().to_string(), c.history),
            _ => (String::new(), 0),
        };
        EvalRow {
            kind: kind.label().to_string(),
            kernel,
            h,
            series_id,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            mean: s.mean,
            max: s.max,
        }
    }
}

/// Normalized absolute one-step errors of `kind` on `series`, from the first
/// tick after the forecaster's warm-up.
pub fn series_errors(kind: &ForecasterKind, series: &EvalSeries) -> Result<Vec<f64>, ForecastError> {
    let truth = matches!(kind, ForecasterKind::Oracle).then(|| series.values.clone());
    let mut f = Forecaster::new(kind, series.scale, truth)?;
    let warmup = kind.warmup();
    let mut errors = Vec::new();
    for (t, pair) in series.values.windows(2).enumerate() {
        f.observe(t as u64, pair[0])?;
        if t + 1 >= warmup {
            let p = f.predict();
            errors.push((p.mean - pair[1]).abs() / series.scale);
        }
    }
    Ok(errors)
}

/// One row per (kind, series) plus a pooled `all` row per kind.
pub fn evaluate_forecasters(
    corpus: &[EvalSeries],
    kinds: &[ForecasterKind],
    parallelism: Parallelism,
) -> Result<Vec<EvalRow>, ForecastError> {
    let jobs: Vec<(usize, usize)> = (0..kinds.len()).flat_map(|k| (0..corpus.len()).map(move |s| (k, s))).collect();
    let results = par::map(&jobs, parallelism, |&(k, s)| series_errors(&kinds[k], &corpus[s]));

    let mut rows = Vec::new();
    let mut results = results.into_iter();
    for kind in kinds {
        let mut pooled = Vec::new();
        for series in corpus {
            let errors = results.next().expect("one result per job")?;
            if let Some(s) = Summary::of(&errors) {
                rows.push(EvalRow::new(kind, series.id.clone(), s));
            }
            pooled.extend(errors);
        }
        if let Some(s) = Summary::of(&pooled) {
            rows.push(EvalRow::new(kind, "all".to_string(), s));
        }
    }
    Ok(rows)
}

pub fn write_eval_csv<W: Write>(rows: &[EvalRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{EVAL_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind, r.kernel, r.h, r.series_id, r.q1, r.median, r.q3, r.mean, r.max
        )?;
    }
    Ok(())
}

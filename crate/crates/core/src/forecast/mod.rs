//! Online one-step-ahead utilization forecasting with uncertainty.
//!
//! Three predictors share the [`Forecaster`] facade: an oracle that replays
//! the ground truth, a GP over history patterns, and an autoregressive model
//! with differencing. Series are normalized by the component reservation
//! before modeling and predictions are scaled back on the way out.

mod ari;
mod eval;
mod gp;
pub mod linalg;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ari::{ari_fit, ari_forecast, ArModel, MAX_AR_ORDER, MIN_SERIES_LEN};
pub use eval::{evaluate_forecasters, write_eval_csv, EvalRow, EvalSeries, EVAL_CSV_HEADER};
pub use gp::{
    factor_with_jitter, gp_posterior, gp_select_hyperparams, gram_matrix, hyperparam_grid, kernel_eval,
    log_marginal_likelihood, GpModel, Hyperparams, KernelKind, LENGTHSCALE_GRID, NOISE_VARIANCE_GRID,
    SIGNAL_VARIANCE_GRID,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("linear system is numerically singular")]
    Singular,
    #[error("hyperparameters must be positive: {0:?}")]
    InvalidHyperparams(Hyperparams),
    #[error("observation at t={t} does not follow t={last}")]
    NonMonotone { last: u64, t: u64 },
    #[error("non-finite value")]
    NonFinite,
}

/// One-step-ahead forecast: mean and variance in the series' units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

impl PredictiveDistribution {
    pub fn new(mean: f64, variance: f64) -> Result<Self, ForecastError> {
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(ForecastError::NonFinite);
        }
        Ok(PredictiveDistribution { mean, variance })
    }

    pub fn exact(value: f64) -> Self {
        PredictiveDistribution { mean: value, variance: 0.0 }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    fn scaled(&self, scale: f64) -> Self {
        PredictiveDistribution { mean: self.mean * scale, variance: self.variance * scale * scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: KernelKind,
    /// Pattern length h: number of past observations per input.
    pub history: usize,
    /// Retained training pairs N.
    pub window: usize,
    /// Observations between evidence-maximization passes.
    pub reselect_every: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { kernel: KernelKind::Exponential, history: 10, window: 10, reselect_every: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AriConfig {
    /// Trailing observations used for each refit.
    pub window: usize,
}

impl Default for AriConfig {
    fn default() -> Self {
        AriConfig { window: 120 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForecasterKind {
    Oracle,
    Gp(GpConfig),
    Ari(AriConfig),
}

impl Default for ForecasterKind {
    fn default() -> Self {
        ForecasterKind::Gp(GpConfig::default())
    }
}

impl ForecasterKind {
    pub fn gp(kernel: KernelKind, history: usize) -> Self {
        ForecasterKind::Gp(GpConfig { kernel, history, window: history, ..GpConfig::default() })
    }

    pub fn ari() -> Self {
        ForecasterKind::Ari(AriConfig::default())
    }

    /// Whether predictions depend on accumulated history (the oracle's do not).
    pub fn needs_history(&self) -> bool {
        !matches!(self, ForecasterKind::Oracle)
    }

    /// Observations required before the first real prediction.
    pub fn warmup(&self) -> usize {
        match self {
            ForecasterKind::Oracle => 0,
            ForecasterKind::Gp(c) => c.history + 1,
            ForecasterKind::Ari(_) => MIN_SERIES_LEN,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ForecasterKind::Oracle => "oracle",
            ForecasterKind::Gp(_) => "gp",
            ForecasterKind::Ari(_) => "ari",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ForecasterKind::Gp(c) if c.history == 0 || c.window == 0 || c.reselect_every == 0 => {
                Err("gp history, window and reselect_every must be positive".into())
            }
            ForecasterKind::Ari(c) if c.window < MIN_SERIES_LEN => {
                Err(format!("ari window must be at least {MIN_SERIES_LEN}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Oracle { truth: Arc<[f64]> },
    Gp { config: GpConfig, gp: GpModel, since_selection: Option<usize> },
    Ari,
}

/// Used until two patterns exist and evidence maximization can run: the grid
/// point that shrinks a lone observation least toward the zero prior.
const INITIAL_HYPERPARAMS: Hyperparams = Hyperparams { signal_variance: 1.0, lengthscale: 8.0, noise_variance: 1e-4 };

/// Streaming single-series forecaster.
///
/// Observations carry a tick index that must strictly increase. Until enough
/// history has accumulated the forecaster returns `(scale, 0)`, i.e. the full
/// reservation with no shaping signal.
#[derive(Debug, Clone)]
pub struct Forecaster {
    model: Model,
    scale: f64,
    last_t: Option<u64>,
    /// (tick, normalized value), trimmed to what the model can use.
    history: VecDeque<(u64, f64)>,
    keep: usize,
}

impl Forecaster {
    /// `scale` is the reservation the series is normalized by; `truth` is only
    /// consulted by the oracle.
    pub fn new(kind: &ForecasterKind, scale: f64, truth: Option<Arc<[f64]>>) -> Result<Self, ForecastError> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(ForecastError::NonFinite);
        }
        let (model, keep) = match *kind {
            ForecasterKind::Oracle => {
                let truth = truth.ok_or(ForecastError::InsufficientData { needed: 1, have: 0 })?;
                if truth.is_empty() {
                    return Err(ForecastError::InsufficientData { needed: 1, have: 0 });
                }
                (Model::Oracle { truth }, 0)
            }
            ForecasterKind::Gp(config) => {
                let gp = GpModel::new(config.history, config.window, config.kernel, INITIAL_HYPERPARAMS)?;
                (Model::Gp { config, gp, since_selection: None }, config.history + 1)
            }
            ForecasterKind::Ari(config) => (Model::Ari, config.window),
        };
        Ok(Forecaster { model, scale, last_t: None, history: VecDeque::with_capacity(keep + 1), keep })
    }

    pub fn observe(&mut self, t: u64, value: f64) -> Result<(), ForecastError> {
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(ForecastError::NonMonotone { last, t });
            }
        }
        if !value.is_finite() {
            return Err(ForecastError::NonFinite);
        }
        self.last_t = Some(t);
        let y = value / self.scale;
        if let Model::Gp { config, gp, since_selection } = &mut self.model {
            if self.history.len() >= config.history {
                let mut pattern = Vec::with_capacity(config.history + 1);
                pattern.push(t as f64);
                pattern.extend(self.history.iter().skip(self.history.len() - config.history).map(|(_, v)| *v));
                gp.push(pattern, y)?;
                let due = since_selection.is_none_or(|n| n + 1 >= config.reselect_every);
                if due && gp.len() >= 2 {
                    let (normalized, _) = normalize_time(gp, t + 1);
                    // Keeps the previous hyperparameters if every grid point is singular.
                    if let Ok(hp) = gp_select_hyperparams(&normalized.patterns(), &normalized.targets(), gp.kernel) {
                        gp.set_hyperparams(hp)?;
                        *since_selection = Some(0);
                    }
                } else if let Some(n) = since_selection {
                    *n += 1;
                }
            }
        }
        if self.keep > 0 {
            self.history.push_back((t, y));
            while self.history.len() > self.keep {
                self.history.pop_front();
            }
        }
        Ok(())
    }

    /// One-step-ahead prediction in the series' original units.
    pub fn predict(&mut self) -> PredictiveDistribution {
        let warmup = PredictiveDistribution::exact(self.scale);
        match &mut self.model {
            Model::Oracle { truth } => {
                let next = self.last_t.map_or(0, |t| t as usize + 1).min(truth.len() - 1);
                PredictiveDistribution::exact(truth[next])
            }
            Model::Gp { config, gp, .. } => {
                if gp.is_empty() {
                    return warmup;
                }
                let t_next = self.last_t.expect("gp has data") + 1;
                let (model, scale_time) = normalize_time(gp, t_next);
                let mut query = gp_query(&self.history, config.history, t_next);
                query[0] = scale_time(query[0]);
                match model.posterior(&query) {
                    Ok(p) => bounded(p).scaled(self.scale),
                    Err(_) => warmup,
                }
            }
            Model::Ari => {
                if self.history.len() < MIN_SERIES_LEN {
                    return warmup;
                }
                let series: Vec<f64> = self.history.iter().map(|(_, v)| *v).collect();
                match ari_fit(&series).and_then(|m| ari_forecast(&m, &series)) {
                    Ok(p) => bounded(p).scaled(self.scale),
                    Err(_) => warmup,
                }
            }
        }
    }
}

/// Usage never leaves (0, reservation], so neither does a normalized forecast mean.
fn bounded(p: PredictiveDistribution) -> PredictiveDistribution {
    PredictiveDistribution { mean: p.mean.clamp(0.0, 1.0), variance: p.variance }
}

fn gp_query(history: &VecDeque<(u64, f64)>, h: usize, t_next: u64) -> Vec<f64> {
    let mut q = Vec::with_capacity(h + 1);
    q.push(t_next as f64);
    q.extend(history.iter().skip(history.len() - h).map(|(_, v)| *v));
    q
}

/// Copy of `gp` with every pattern's time coordinate mapped into [0, 1]
/// over the retained window: `t_query` maps to 1 and a pattern `window`
/// ticks older maps to 0. Older patterns (only possible with tick gaps)
/// widen the span so nothing falls below 0.
fn normalize_time(gp: &GpModel, t_query: u64) -> (GpModel, impl Fn(f64) -> f64) {
    let patterns = gp.patterns();
    let t_query = t_query as f64;
    let t_min = patterns.first().map_or(t_query, |p| p[0]);
    let span = (t_query - t_min).max(gp.capacity as f64);
    let rescale = move |t: f64| 1.0 - (t_query - t) / span;
    let mut model = gp.clone();
    model.clear();
    for (mut p, y) in patterns.into_iter().zip(gp.targets()) {
        p[0] = rescale(p[0]);
        model.push(p, y).expect("pattern length unchanged");
    }
    (model, rescale)
}

/// Streaming facade: appends an observation.
pub fn forecaster_observe(state: &mut Forecaster, t: u64, value: f64) -> Result<(), ForecastError> {
    state.observe(t, value)
}

/// Streaming facade: predicts the next tick.
pub fn forecaster_predict(state: &mut Forecaster) -> PredictiveDistribution {
    state.predict()
}

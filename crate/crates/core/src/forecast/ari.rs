//! Autoregressive model with optional first differencing (ARIMA(p, d, 0)),
//! fitted by ordinary least squares with AIC order selection.

use serde::{Deserialize, Serialize};

use super::linalg::least_squares;
use super::{ForecastError, PredictiveDistribution};

pub const MAX_AR_ORDER: usize = 3;
pub const MAX_DIFFERENCING: usize = 1;
pub const MIN_SERIES_LEN: usize = 5;
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    pub d: usize,
    /// φ₁…φ_p, applied to the most recent (differenced) values first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
    pub aic: f64,
    pub window_len: usize,
}

impl ArModel {
    /// Observations needed to forecast: p lags of the d-times differenced series.
    pub fn required_history(&self) -> usize {
        (self.p + self.d).max(1)
    }
}

fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut z = series.to_vec();
    for _ in 0..d {
        z = z.windows(2).map(|w| w[1] - w[0]).collect();
    }
    z
}

/// OLS fit of AR(p) with intercept on the d-differenced series.
fn fit_order(series: &[f64], p: usize, d: usize) -> Option<ArModel> {
    let z = difference(series, d);
    let n_eff = z.len().checked_sub(p)?;
    let k = p + 1;
    // At least one residual degree of freedom.
    if n_eff < k + 1 {
        return None;
    }
    let mut design = Vec::with_capacity(n_eff * k);
    let mut target = Vec::with_capacity(n_eff);
    for t in p..z.len() {
        design.push(1.0);
        for lag in 1..=p {
            design.push(z[t - lag]);
        }
        target.push(z[t]);
    }
    let beta = least_squares(&design, n_eff, k, &target)?;
    let sse: f64 = (0..n_eff)
        .map(|r| {
            let fitted: f64 = (0..k).map(|c| design[r * k + c] * beta[c]).sum();
            (target[r] - fitted).powi(2)
        })
        .sum();
    if !sse.is_finite() {
        return None;
    }
    let sigma2_mle = (sse / n_eff as f64).max(VARIANCE_FLOOR);
    let aic = n_eff as f64 * sigma2_mle.ln() + 2.0 * (p + d + 1) as f64;
    Some(ArModel {
        p,
        d,
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        residual_variance: (sse / (n_eff - p - 1) as f64).max(VARIANCE_FLOOR),
        aic,
        window_len: series.len(),
    })
}

/// Fits every (p, d) in {0..3}×{0,1} and keeps the minimum-AIC model.
///
/// Near-ties (relative 1e−9) prefer fewer AR terms, then less differencing.
/// Orders whose regression is singular (e.g. lags of a constant series) are
/// skipped, which leaves the p=0 mean model for constant input.
pub fn ari_fit(series: &[f64]) -> Result<ArModel, ForecastError> {
    if series.len() < MIN_SERIES_LEN {
        return Err(ForecastError::InsufficientData { needed: MIN_SERIES_LEN, have: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let mut best: Option<ArModel> = None;
    for p in 0..=MAX_AR_ORDER {
        for d in 0..=MAX_DIFFERENCING {
            let Some(model) = fit_order(series, p, d) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let tol = 1e-9 * b.aic.abs().max(1.0);
                    model.aic < b.aic - tol
                }
            };
            if better {
                best = Some(model);
            }
        }
    }
    best.ok_or(ForecastError::Singular)
}

/// One-step-ahead forecast from the trailing observations `history`.
pub fn ari_forecast(model: &ArModel, history: &[f64]) -> Result<PredictiveDistribution, ForecastError> {
    let needed = model.required_history();
    if history.len() < needed {
        return Err(ForecastError::InsufficientData { needed, have: history.len() });
    }
    let tail = &history[history.len() - needed..];
    let z = difference(tail, model.d);
    let mut next = model.intercept;
    for (i, phi) in model.coefficients.iter().enumerate() {
        next += phi * z[z.len() - 1 - i];
    }
    if model.d == 1 {
        next += tail[tail.len() - 1];
    }
    PredictiveDistribution::new(next, model.residual_variance)
}

//! Gaussian-process regression over history patterns.
//!
//! Training inputs are patterns `[x_t, y_{t-h}, …, y_{t-1}]` (the time
//! coordinate followed by the `h` previous observations) and targets are
//! `y_t`. The prior mean is zero, so callers normalize their series first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, cholesky_log_det, cholesky_solve, dot, forward_sub, trace};
use super::{ForecastError, PredictiveDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `σ_f² exp(−‖a−b‖ / ℓ)`
    Exponential,
    /// `σ_f² exp(−‖a−b‖² / 2ℓ²)`
    Rbf,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Exponential => "exponential",
            KernelKind::Rbf => "rbf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { signal_variance: 0.25, lengthscale: 2.0, noise_variance: 1e-2 }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), ForecastError> {
        if self.signal_variance > 0.0 && self.lengthscale > 0.0 && self.noise_variance > 0.0 {
            Ok(())
        } else {
            Err(ForecastError::InvalidHyperparams(*self))
        }
    }
}

pub const SIGNAL_VARIANCE_GRID: [f64; 3] = [0.05, 0.25, 1.0];
pub const LENGTHSCALE_GRID: [f64; 4] = [0.1, 0.5, 2.0, 8.0];
pub const NOISE_VARIANCE_GRID: [f64; 3] = [1e-4, 1e-2, 1e-1];

/// Candidate hyperparameters in selection order (σ_f² outermost, σ² innermost).
pub fn hyperparam_grid() -> impl Iterator<Item = Hyperparams> {
    SIGNAL_VARIANCE_GRID.into_iter().flat_map(|sf2| {
        LENGTHSCALE_GRID.into_iter().flat_map(move |ell| {
            NOISE_VARIANCE_GRID.into_iter().map(move |sn2| Hyperparams {
                signal_variance: sf2,
                lengthscale: ell,
                noise_variance: sn2,
            })
        })
    })
}

pub fn kernel_eval(
    kind: KernelKind,
    a: &[f64],
    b: &[f64],
    signal_variance: f64,
    lengthscale: f64,
) -> Result<f64, ForecastError> {
    if a.len() != b.len() {
        return Err(ForecastError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(kernel_unchecked(kind, a, b, signal_variance, lengthscale))
}

fn kernel_unchecked(kind: KernelKind, a: &[f64], b: &[f64], sf2: f64, ell: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match kind {
        KernelKind::Exponential => sf2 * (-sq.sqrt() / ell).exp(),
        KernelKind::Rbf => sf2 * (-sq / (2.0 * ell * ell)).exp(),
    }
}

/// Row-major Gram matrix `k(X, X)`.
pub fn gram_matrix(kind: KernelKind, patterns: &[Vec<f64>], hp: &Hyperparams) -> Vec<f64> {
    let n = patterns.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = hp.signal_variance;
        for j in 0..i {
            let v = kernel_unchecked(kind, &patterns[i], &patterns[j], hp.signal_variance, hp.lengthscale);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Cholesky of `K + σ²I`, adding diagonal jitter of 1e−8·tr escalating ×10
/// up to 1e−2·tr if the plain factorization fails.
pub fn factor_with_jitter(k: &[f64], n: usize, noise_variance: f64) -> Result<Vec<f64>, ForecastError> {
    let mut a = k.to_vec();
    for i in 0..n {
        a[i * n + i] += noise_variance;
    }
    if let Some(l) = cholesky(&a, n) {
        return Ok(l);
    }
    let tr = trace(&a, n).abs().max(f64::MIN_POSITIVE);
    let mut rel = 1e-8;
    while rel <= 1e-2 * (1.0 + 1e-9) {
        let mut b = a.clone();
        for i in 0..n {
            b[i * n + i] += rel * tr;
        }
        if let Some(l) = cholesky(&b, n) {
            return Ok(l);
        }
        rel *= 10.0;
    }
    Err(ForecastError::Singular)
}

/// `log p(y | X)` under a zero-mean GP with hyperparameters `hp`.
pub fn log_marginal_likelihood(
    kind: KernelKind,
    patterns: &[Vec<f64>],
    targets: &[f64],
    hp: &Hyperparams,
) -> Result<f64, ForecastError> {
    let n = patterns.len();
    let k = gram_matrix(kind, patterns, hp);
    let l = factor_with_jitter(&k, n, hp.noise_variance)?;
    let alpha = cholesky_solve(&l, n, targets);
    let lml = -0.5 * dot(targets, &alpha)
        - 0.5 * cholesky_log_det(&l, n)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if lml.is_finite() {
        Ok(lml)
    } else {
        Err(ForecastError::Singular)
    }
}

/// Evidence maximization over the fixed grid; ties keep the earliest grid point.
pub fn gp_select_hyperparams(
    patterns: &[Vec<f64>],
    targets: &[f64],
    kind: KernelKind,
) -> Result<Hyperparams, ForecastError> {
    if patterns.len() < 2 || patterns.len() != targets.len() {
        return Err(ForecastError::InsufficientData { needed: 2, have: patterns.len().min(targets.len()) });
    }
    let mut best: Option<(f64, Hyperparams)> = None;
    for hp in hyperparam_grid() {
        let Ok(lml) = log_marginal_likelihood(kind, patterns, targets, &hp) else {
            continue;
        };
        if best.is_none_or(|(b, _)| lml > b) {
            best = Some((lml, hp));
        }
    }
    best.map(|(_, hp)| hp).ok_or(ForecastError::Singular)
}

/// GP over at most `capacity` most recent (pattern, target) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub history: usize,
    pub capacity: usize,
    pub kernel: KernelKind,
    pub hyper: Hyperparams,
    patterns: VecDeque<Vec<f64>>,
    targets: VecDeque<f64>,
}

impl GpModel {
    pub fn new(history: usize, capacity: usize, kernel: KernelKind, hyper: Hyperparams) -> Result<Self, ForecastError> {
        hyper.validate()?;
        if capacity == 0 {
            return Err(ForecastError::InsufficientData { needed: 1, have: 0 });
        }
        Ok(GpModel {
            history,
            capacity,
            kernel,
            hyper,
            patterns: VecDeque::with_capacity(capacity),
            targets: VecDeque::with_capacity(capacity),
        })
    }

    pub fn pattern_len(&self) -> usize {
        self.history + 1
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Appends a training pair, evicting the oldest beyond capacity.
    pub fn push(&mut self, pattern: Vec<f64>, target: f64) -> Result<(), ForecastError> {
        if pattern.len() != self.pattern_len() {
            return Err(ForecastError::DimensionMismatch { expected: self.pattern_len(), found: pattern.len() });
        }
        if self.patterns.len() == self.capacity {
            self.patterns.pop_front();
            self.targets.pop_front();
        }
        self.patterns.push_back(pattern);
        self.targets.push_back(target);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.patterns.clear();
        self.targets.clear();
    }

    pub fn patterns(&self) -> Vec<Vec<f64>> {
        self.patterns.iter().cloned().collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.targets.iter().copied().collect()
    }

    pub fn set_hyperparams(&mut self, hyper: Hyperparams) -> Result<(), ForecastError> {
        hyper.validate()?;
        self.hyper = hyper;
        Ok(())
    }

    /// Re-runs evidence maximization on the retained data.
    pub fn select_hyperparams(&mut self) -> Result<Hyperparams, ForecastError> {
        let hp = gp_select_hyperparams(&self.patterns(), &self.targets(), self.kernel)?;
        self.hyper = hp;
        Ok(hp)
    }

    /// Posterior predictive distribution of the latent function at `query`.
    pub fn posterior(&self, query: &[f64]) -> Result<PredictiveDistribution, ForecastError> {
        if self.patterns.is_empty() {
            return Err(ForecastError::InsufficientData { needed: 1, have: 0 });
        }
        if query.len() != self.pattern_len() {
            return Err(ForecastError::DimensionMismatch { expected: self.pattern_len(), found: query.len() });
        }
        let hp = &self.hyper;
        let patterns = self.patterns();
        let targets = self.targets();
        let n = patterns.len();
        let k = gram_matrix(self.kernel, &patterns, hp);
        let l = factor_with_jitter(&k, n, hp.noise_variance)?;
        let k_star: Vec<f64> = patterns
            .iter()
            .map(|p| kernel_unchecked(self.kernel, query, p, hp.signal_variance, hp.lengthscale))
            .collect();
        let alpha = cholesky_solve(&l, n, &targets);
        let mean = dot(&k_star, &alpha);
        let v = forward_sub(&l, n, &k_star);
        let variance = (hp.signal_variance - dot(&v, &v)).max(0.0);
        PredictiveDistribution::new(mean, variance)
    }
}

/// Free-standing form of [`GpModel::posterior`].
pub fn gp_posterior(model: &GpModel, query: &[f64]) -> Result<PredictiveDistribution, ForecastError> {
    model.posterior(query)
}

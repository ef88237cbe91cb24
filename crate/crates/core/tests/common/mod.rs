//! Test oracles and corpora shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shapesim::forecast::{EvalSeries, KernelKind};
use shapesim::workload::{PatternKind, UsagePattern};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Kernel written out independently of the library.
pub fn kernel(kind: KernelKind, a: &[f64], b: &[f64], sf2: f64, ell: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    match kind {
        KernelKind::Exponential => sf2 * (-d2.sqrt() / ell).exp(),
        KernelKind::Rbf => sf2 * (-d2 / (2.0 * ell * ell)).exp(),
    }
}

pub fn dense_gram(kind: KernelKind, xs: &[Vec<f64>], sf2: f64, ell: f64) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| kernel(kind, &xs[i], &xs[j], sf2, ell))
}

/// Posterior mean and variance by explicit LU inversion of `K + σ²I`.
pub fn dense_posterior(
    kind: KernelKind,
    xs: &[Vec<f64>],
    ys: &[f64],
    q: &[f64],
    sf2: f64,
    ell: f64,
    sn2: f64,
) -> (f64, f64) {
    let n = xs.len();
    let k = dense_gram(kind, xs, sf2, ell) + DMatrix::identity(n, n) * sn2;
    let inv = k.lu().try_inverse().expect("invertible");
    let ks = DVector::from_fn(n, |i, _| kernel(kind, q, &xs[i], sf2, ell));
    let y = DVector::from_column_slice(ys);
    let mean = ks.dot(&(&inv * y));
    let var = sf2 - ks.dot(&(&inv * &ks));
    (mean, var)
}

/// Dense `log p(y | X)` via nalgebra's Cholesky.
pub fn dense_lml(kind: KernelKind, xs: &[Vec<f64>], ys: &[f64], sf2: f64, ell: f64, sn2: f64) -> f64 {
    let n = xs.len();
    let k = dense_gram(kind, xs, sf2, ell) + DMatrix::identity(n, n) * sn2;
    let chol = k.cholesky().expect("positive definite");
    let y = DVector::from_column_slice(ys);
    let alpha = chol.solve(&y);
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Random patterns of dimension `dim` in [0, 1).
pub fn random_patterns(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.random::<f64>()).collect()).collect()
}

/// `y_t = c + φ y_{t−1} + ε`, after a 200-step burn-in.
pub fn ar1(n: usize, phi: f64, c: f64, sigma: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut y = c / (1.0 - phi);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + 200 {
        y = c + phi * y + noise.sample(r);
        if t >= 200 {
            out.push(y);
        }
    }
    out
}

/// `n` normalized usage profiles of one pattern kind, `ticks` long.
pub fn corpus(kind: PatternKind, n: usize, ticks: usize, seed: u64) -> Vec<EvalSeries> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let pattern = UsagePattern::sample(kind, &mut r);
            let values: Arc<[f64]> = pattern.profile(ticks, &mut r).into();
            EvalSeries { id: format!("{i}"), values, scale: 1.0 }
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

//! Small dense linear algebra: Cholesky for the GP and Householder QR for
//! the autoregressive least-squares fits. Matrices are row-major `Vec<f64>`.

/// Lower-triangular Cholesky factor of the symmetric `n×n` matrix `a`,
/// or `None` if `a` is not numerically positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !sum.is_finite() || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn backward_sub_transposed(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `(L Lᵀ) x = b`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let y = forward_sub(l, n, b);
    backward_sub_transposed(l, n, &y)
}

/// `log |L Lᵀ|` from its Cholesky factor.
pub fn cholesky_log_det(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution of `X β ≈ y` for an `m×k` design `x` (m ≥ k).
///
/// Returns `None` when `X` is rank deficient relative to its column scale.
pub fn least_squares(x: &[f64], m: usize, k: usize, y: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(x.len(), m * k);
    if m < k {
        return None;
    }
    let mut a = x.to_vec();
    let mut rhs = y.to_vec();
    let col_scale: Vec<f64> = (0..k).map(|j| (0..m).map(|i| a[i * k + j].powi(2)).sum::<f64>().sqrt()).collect();
    for j in 0..k {
        let norm = (j..m).map(|i| a[i * k + j].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-10 * col_scale[j].max(f64::MIN_POSITIVE) || norm == 0.0 {
            return None;
        }
        let alpha = if a[j * k + j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| a[i * k + j]).collect();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > 0.0 {
            for c in j..k {
                let s = (j..m).map(|i| v[i - j] * a[i * k + c]).sum::<f64>() * 2.0 / vnorm2;
                for i in j..m {
                    a[i * k + c] -= s * v[i - j];
                }
            }
            let s = (j..m).map(|i| v[i - j] * rhs[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..m {
                rhs[i] -= s * v[i - j];
            }
        }
    }
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for c in i + 1..k {
            s -= a[i * k + c] * beta[c];
        }
        beta[i] = s / a[i * k + i];
    }
    Some(beta)
}

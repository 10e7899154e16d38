// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multivariate Gaussian primitives behind the change score.
//!
//! Windows are row-major slices of `n × d` values. Covariances use the
//! maximum-likelihood divisor `n` and are regularized as `Σ + εI` after
//! estimation. All logarithms are natural.

use crate::error::{Error, Result};

/// Number of free parameters of a full-covariance Gaussian in `d` dimensions:
/// `d` for the mean plus `d(d+1)/2` for the covariance.
pub fn free_parameters(dim: usize) -> usize {
    dim + dim * (dim + 1) / 2
}

/// Mean, regularized ML covariance, and its log-determinant for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSummary {
    pub n: usize,
    pub d: usize,
    pub mean: Vec<f64>,
    /// `d × d`, row-major, exactly symmetric.
    pub cov: Vec<f64>,
    pub log_det: f64,
}

/// Unregularized sufficient statistics of a window.
#[derive(Clone, Debug)]
pub(crate) struct Scatter {
    pub n: usize,
    pub mean: Vec<f64>,
    /// ML covariance without the ridge term, row-major `d × d`.
    pub cov: Vec<f64>,
}

impl Scatter {
    /// Two-pass mean and covariance. Caller guarantees `n >= 1` and finite data.
    pub fn of_rows(window: &[f64], dim: usize) -> Self {
        let n = window.len() / dim;
        let mut mean = vec![0.0; dim];
        for row in window.chunks_exact(dim) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let inv_n = 1.0 / n as f64;
        for m in &mut mean {
            *m *= inv_n;
        }

        let mut cov = vec![0.0; dim * dim];
        let mut centered = vec![0.0; dim];
        for row in window.chunks_exact(dim) {
            for ((c, &x), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = x - m;
            }
            for i in 0..dim {
                let ci = centered[i];
                for j in i..dim {
                    cov[i * dim + j] += ci * centered[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] * inv_n;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        Self { n, mean, cov }
    }

    /// Statistics of the concatenation of two windows, from their own statistics.
    pub fn pooled(a: &Self, b: &Self) -> Self {
        let dim = a.mean.len();
        let n = a.n + b.n;
        let total = n as f64;
        let wa = a.n as f64 / total;
        let wb = b.n as f64 / total;
        let cross = (a.n as f64 * b.n as f64) / (total * total);

        let diff: Vec<f64> = a.mean.iter().zip(&b.mean).map(|(x, y)| x - y).collect();
        let mean = a
            .mean
            .iter()
            .zip(&b.mean)
            .map(|(x, y)| wa * x + wb * y)
            .collect();
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let idx = i * dim + j;
                let v = wa * a.cov[idx] + wb * b.cov[idx] + cross * diff[i] * diff[j];
                cov[idx] = v;
                cov[j * dim + i] = v;
            }
        }
        Self { n, mean, cov }
    }

    /// `log |Σ + εI|`, or `None` when the regularized matrix is not positive definite.
    pub fn log_det(&self, epsilon: f64) -> Option<f64> {
        let dim = self.mean.len();
        let mut a = self.cov.clone();
        for i in 0..dim {
            a[i * dim + i] += epsilon;
        }
        cholesky_log_det(&mut a, dim)
    }
}

/// In-place Cholesky factorization of a symmetric `d × d` matrix, returning
/// `2 Σ log L_ii`. Only the lower triangle is read. `None` if a pivot is not
/// strictly positive.
pub fn cholesky_log_det(a: &mut [f64], dim: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut log_det = 0.0;
    for j in 0..dim {
        let mut diag = a[j * dim + j];
        for k in 0..j {
            diag -= a[j * dim + k] * a[j * dim + k];
        }
        if !(diag.is_finite() && diag > 0.0) {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * dim + j] = ljj;
        log_det += ljj.ln();
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = s / ljj;
        }
    }
    Some(2.0 * log_det)
}

fn check_window(window: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || window.len() % dim != 0 {
        return Err(Error::invalid(format!(
            "window of {} values is not a whole number of {dim}-wide rows",
            window.len()
        )));
    }
    let n = window.len() / dim;
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("window contains non-finite values"));
    }
    Ok(n)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )))
    }
}

/// Maximum-likelihood covariance of an `n × d` window with ridge `epsilon`.
pub fn ml_covariance(window: &[f64], dim: usize, epsilon: f64) -> Result<CovarianceSummary> {
    let n = check_window(window, dim)?;
    check_epsilon(epsilon)?;
    let scatter = Scatter::of_rows(window, dim);
    let log_det = scatter.log_det(epsilon).ok_or(Error::SingularCovariance)?;
    let mut cov = scatter.cov;
    for i in 0..dim {
        cov[i * dim + i] += epsilon;
    }
    Ok(CovarianceSummary {
        n,
        d: dim,
        mean: scatter.mean,
        cov,
        log_det,
    })
}

/// Gaussian BIC of a single window: `(n/2) log|Σ_ε| + λ k log n`.
pub fn bic_segment(window: &[f64], dim: usize, lambda: f64, epsilon: f64) -> Result<f64> {
    let summary = ml_covariance(window, dim, epsilon)?;
    let n = summary.n as f64;
    Ok(0.5 * n * summary.log_det + lambda * free_parameters(dim) as f64 * n.ln())
}

/// Change score between two adjacent windows of equal length `δ`:
///
/// `2δ log|Σ₁₂| − δ (log|Σ₁| + log|Σ₂|) + k log(2δ)`
///
/// where `Σ₁₂` is the covariance of the concatenated `2δ` rows. Larger values
/// mean stronger evidence that the two windows come from different Gaussians.
pub fn delta_bic(x1: &[f64], x2: &[f64], dim: usize, epsilon: f64) -> Result<f64> {
    delta_bic_weighted(x1, x2, dim, epsilon, 1.0)
}

/// [`delta_bic`] with the complexity term scaled by `lambda`.
pub fn delta_bic_weighted(
    x1: &[f64],
    x2: &[f64],
    dim: usize,
    epsilon: f64,
    lambda: f64,
) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::invalid(format!(
            "window shapes differ: {} vs {} values",
            x1.len(),
            x2.len()
        )));
    }
    check_window(x1, dim)?;
    check_window(x2, dim)?;
    check_epsilon(epsilon)?;
    let a = Scatter::of_rows(x1, dim);
    let b = Scatter::of_rows(x2, dim);
    score_from_scatters(&a, &b, dim, epsilon, lambda).ok_or(Error::SingularCovariance)
}

/// Score for two equal-length windows whose statistics are already known.
pub(crate) fn score_from_scatters(
    a: &Scatter,
    b: &Scatter,
    dim: usize,
    epsilon: f64,
    lambda: f64,
) -> Option<f64> {
    let delta = a.n as f64;
    let joint = Scatter::pooled(a, b);
    let ld1 = a.log_det(epsilon)?;
    let ld2 = b.log_det(epsilon)?;
    let ld12 = joint.log_det(epsilon)?;
    let penalty = lambda * free_parameters(dim) as f64 * (2.0 * delta).ln();
    Some(2.0 * delta * ld12 - delta * (ld1 + ld2) + penalty)
}

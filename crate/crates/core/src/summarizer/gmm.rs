// SPDX-License-Identifier: MIT OR Apache-2.0

//! Diagonal-covariance Gaussian mixtures fit by EM with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower bound on every per-channel component variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// EM stops once the per-point log-likelihood gains less than this.
pub const CONVERGENCE_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A fitted mixture. `means` and `variances` are `K × d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub components: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Mean per-point log-likelihood after initialization and after every
    /// accepted EM step. Non-decreasing.
    pub log_likelihood: Vec<f64>,
}

impl GmmModel {
    pub fn mean(&self, j: usize) -> &[f64] {
        &self.means[j * self.dim..(j + 1) * self.dim]
    }

    pub fn variance(&self, j: usize) -> &[f64] {
        &self.variances[j * self.dim..(j + 1) * self.dim]
    }

    /// Component indices by descending weight, ties broken by ascending
    /// first-channel mean.
    pub fn order_by_weight(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.components).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .total_cmp(&self.weights[a])
                .then(self.mean(a)[0].total_cmp(&self.mean(b)[0]))
                .then(a.cmp(&b))
        });
        order
    }
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

/// Fits a `components`-component diagonal GMM to `points` (`n × dim`, row-major).
///
/// Requires `n >= 2·components`; smaller inputs return [`Error::TooFewPoints`].
pub fn fit_gmm(points: &[f64], dim: usize, components: usize, seed: u64) -> Result<GmmModel> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::invalid("points do not form whole rows"));
    }
    if components == 0 {
        return Err(Error::invalid("component count must be >= 1"));
    }
    let n = points.len() / dim;
    if n < 2 * components {
        return Err(Error::TooFewPoints {
            points: n,
            components,
            needed: 2 * components,
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = initialize(points, dim, components, &mut rng);
    let mut resp = vec![0.0; n * components];
    let mut ll = e_step(points, dim, &params, &mut resp);
    let mut trace = vec![ll / n as f64];
    let mut next_resp = vec![0.0; n * components];

    for _ in 0..MAX_ITERATIONS {
        let next = m_step(points, dim, components, &resp, &params);
        let next_ll = e_step(points, dim, &next, &mut next_resp);
        if next_ll.is_nan() || next_ll < ll {
            // Rounding at the fixed point; keep the last accepted parameters.
            break;
        }
        let gain = (next_ll - ll) / n as f64;
        params = next;
        ll = next_ll;
        std::mem::swap(&mut resp, &mut next_resp);
        trace.push(ll / n as f64);
        if gain < CONVERGENCE_TOL {
            break;
        }
    }

    Ok(GmmModel {
        components,
        dim,
        weights: params.weights,
        means: params.means,
        variances: params.variances,
        log_likelihood: trace,
    })
}

fn initialize(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Params {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let sq_dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }

    let mut global_mean = vec![0.0; dim];
    for i in 0..n {
        for (m, x) in global_mean.iter_mut().zip(row(i)) {
            *m += x / n as f64;
        }
    }
    let mut global_var = vec![0.0; dim];
    for i in 0..n {
        for ((v, x), m) in global_var.iter_mut().zip(row(i)).zip(&global_mean) {
            *v += (x - m).powi(2) / n as f64;
        }
    }
    let floored: Vec<f64> = global_var.iter().map(|v| v.max(VARIANCE_FLOOR)).collect();

    Params {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().flat_map(|&c| row(c).to_vec()).collect(),
        variances: floored.repeat(k),
    }
}

/// Fills `resp` with posterior responsibilities and returns the total log-likelihood.
fn e_step(points: &[f64], dim: usize, params: &Params, resp: &mut [f64]) -> f64 {
    let k = params.weights.len();
    let log_norm: Vec<f64> = (0..k)
        .map(|j| {
            let vars = &params.variances[j * dim..(j + 1) * dim];
            params.weights[j].ln() - 0.5 * vars.iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
        })
        .collect();

    let mut total = 0.0;
    for (x, r) in points.chunks_exact(dim).zip(resp.chunks_exact_mut(k)) {
        for j in 0..k {
            let mean = &params.means[j * dim..(j + 1) * dim];
            let vars = &params.variances[j * dim..(j + 1) * dim];
            let quad: f64 = x
                .iter()
                .zip(mean)
                .zip(vars)
                .map(|((xi, mi), vi)| (xi - mi).powi(2) / vi)
                .sum();
            r[j] = log_norm[j] - 0.5 * quad;
        }
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = r.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        for l in r.iter_mut() {
            *l = (*l - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(points: &[f64], dim: usize, k: usize, resp: &[f64], prev: &Params) -> Params {
    let n = points.len() / dim;
    let mut weights = vec![0.0; k];
    let mut means = vec![0.0; k * dim];
    let mut variances = vec![0.0; k * dim];

    for (x, r) in points.chunks_exact(dim).zip(resp.chunks_exact(k)) {
        for j in 0..k {
            weights[j] += r[j];
            for c in 0..dim {
                means[j * dim + c] += r[j] * x[c];
            }
        }
    }
    for j in 0..k {
        if weights[j] > 0.0 {
            for c in 0..dim {
                means[j * dim + c] /= weights[j];
            }
        } else {
            means[j * dim..(j + 1) * dim].copy_from_slice(&prev.means[j * dim..(j + 1) * dim]);
        }
    }
    for (x, r) in points.chunks_exact(dim).zip(resp.chunks_exact(k)) {
        for j in 0..k {
            for c in 0..dim {
                variances[j * dim + c] += r[j] * (x[c] - means[j * dim + c]).powi(2);
            }
        }
    }
    for j in 0..k {
        for c in 0..dim {
            let v = if weights[j] > 0.0 {
                variances[j * dim + c] / weights[j]
            } else {
                prev.variances[j * dim + c]
            };
            variances[j * dim + c] = v.max(VARIANCE_FLOOR);
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= if total > 0.0 { total } else { n as f64 };
    }
    Params {
        weights,
        means,
        variances,
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-scale change scoring and split selection.
//!
//! For each half-window size `δ` the series is scanned on the grid
//! `t ∈ {δ, δ + stride, …}` with `t + δ ≤ T`, comparing `[t−δ, t)` against
//! `[t, t+δ)`. Positions whose score clears `μ_δ + α·σ_δ` become candidates,
//! candidates from every scale are pooled (max score per position), and a
//! greedy non-maximum suppression keeps splits at least `s_min` apart.

use std::collections::BTreeSet;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, Scatter};
use crate::series::TimeSeries;

const FLAT_SCORE_SIGMA: f64 = 1e-12;

/// Hyperparameters of the multi-scale detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub delta_min: usize,
    pub delta_max: usize,
    pub delta_step: usize,
    pub stride: usize,
    pub alpha: f64,
    pub s_min: usize,
    pub epsilon: f64,
    pub lambda: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            delta_min: 5,
            delta_max: 500,
            delta_step: 5,
            stride: 10,
            alpha: 2.0,
            s_min: 20,
            epsilon: 1e-6,
            lambda: 1.0,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.delta_min < 2 {
            return fail(format!("delta_min must be >= 2, got {}", self.delta_min));
        }
        if self.delta_max < self.delta_min {
            return fail(format!(
                "delta_max ({}) must be >= delta_min ({})",
                self.delta_max, self.delta_min
            ));
        }
        if self.delta_step == 0 {
            return fail("delta_step must be >= 1".into());
        }
        if self.stride == 0 {
            return fail("stride must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.s_min == 0 {
            return fail("s_min must be >= 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return fail(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            ));
        }
        if !self.lambda.is_finite() {
            return fail(format!("lambda must be finite, got {}", self.lambda));
        }
        Ok(())
    }

    /// Scales evaluated on a series of length `len`; `delta_max` is clamped to `len / 2`.
    pub fn scales_for(&self, len: usize) -> impl Iterator<Item = usize> {
        let upper = self.delta_max.min(len / 2);
        (self.delta_min..=upper).step_by(self.delta_step.max(1))
    }
}

/// A scored boundary between `[position − scale, position)` and `[position, position + scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChangeCandidate {
    pub position: usize,
    pub score: f64,
    pub scale: usize,
}

/// Score distribution at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub scale: usize,
    pub mu: f64,
    /// Population standard deviation (divisor `N`).
    pub sigma: f64,
}

impl ScaleStats {
    pub fn threshold(&self, alpha: f64) -> f64 {
        self.mu + alpha * self.sigma
    }
}

/// Strictly increasing interior split points of a series of length `length`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    length: usize,
    splits: Vec<usize>,
}

impl Segmentation {
    pub fn new(length: usize, splits: Vec<usize>) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("segmentation length must be >= 1"));
        }
        if let Some(&bad) = splits.iter().find(|&&s| s == 0 || s >= length) {
            return Err(Error::invalid(format!(
                "split {bad} lies outside the interior (0, {length})"
            )));
        }
        if splits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("splits must be strictly increasing"));
        }
        Ok(Self { length, splits })
    }

    /// The trivial segmentation `[0, length)`.
    pub fn single(length: usize) -> Self {
        Self {
            length,
            splits: Vec::new(),
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn splits(&self) -> &[usize] {
        &self.splits
    }

    pub fn segment_count(&self) -> usize {
        self.splits.len() + 1
    }

    /// Half-open segment ranges tiling `[0, length)`.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let mut bounds = Vec::with_capacity(self.splits.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&self.splits);
        bounds.push(self.length);
        bounds.windows(2).map(|w| w[0]..w[1]).collect()
    }
}

/// Scores every grid position at one scale. Returns [`Error::EmptyScale`] when `2δ > T`.
pub fn score_scale(
    series: &TimeSeries,
    delta: usize,
    cfg: &TokenizerConfig,
) -> Result<Vec<ChangeCandidate>> {
    let len = series.len();
    if delta < 2 {
        return Err(Error::invalid(format!("scale must be >= 2, got {delta}")));
    }
    if 2 * delta > len {
        return Err(Error::EmptyScale { delta, len });
    }
    let stride = cfg.stride.max(1);
    let dim = series.dim();
    (delta..=len - delta)
        .step_by(stride)
        .map(|t| {
            let left = Scatter::of_rows(series.rows(t - delta, t), dim);
            let right = Scatter::of_rows(series.rows(t, t + delta), dim);
            let score = gaussian::score_from_scatters(&left, &right, dim, cfg.epsilon, cfg.lambda)
                .ok_or(Error::SingularCovariance)?;
            Ok(ChangeCandidate {
                position: t,
                score,
                scale: delta,
            })
        })
        .collect()
}

/// Keeps the positions whose score is at least `μ + α·σ` for their scale.
///
/// A flat score field (`σ < 1e-12`) yields no candidates.
pub fn threshold_candidates(
    scored: &[ChangeCandidate],
    alpha: f64,
) -> Result<(ScaleStats, Vec<ChangeCandidate>)> {
    let Some(first) = scored.first() else {
        return Err(Error::EmptyScale { delta: 0, len: 0 });
    };
    let scale = first.scale;
    if scored.iter().any(|c| c.scale != scale) {
        return Err(Error::invalid("candidates from more than one scale"));
    }
    let n = scored.len() as f64;
    let mu = scored.iter().map(|c| c.score).sum::<f64>() / n;
    let var = scored.iter().map(|c| (c.score - mu).powi(2)).sum::<f64>() / n;
    let stats = ScaleStats {
        scale,
        mu,
        sigma: var.sqrt(),
    };
    if stats.sigma < FLAT_SCORE_SIGMA {
        return Ok((stats, Vec::new()));
    }
    let threshold = stats.threshold(alpha);
    let kept = scored
        .iter()
        .copied()
        .filter(|c| c.score >= threshold)
        .collect();
    Ok((stats, kept))
}

/// Pools candidates from all scales, keeping the highest score at each position.
/// Output is ordered by position.
pub fn merge_candidates(mut candidates: Vec<ChangeCandidate>) -> Vec<ChangeCandidate> {
    candidates.sort_by(|a, b| {
        a.position
            .cmp(&b.position)
            .then(b.score.total_cmp(&a.score))
            .then(a.scale.cmp(&b.scale))
    });
    candidates.dedup_by_key(|c| c.position);
    candidates
}

/// Greedy non-maximum suppression.
///
/// Visits candidates by descending score (lower position first on ties) and
/// accepts one only if every accepted split is at least `s_min` away.
/// Returns accepted positions in ascending order.
pub fn non_maximum_suppression(candidates: &[ChangeCandidate], s_min: usize) -> Vec<usize> {
    let mut order: Vec<&ChangeCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.position.cmp(&b.position))
    });

    let mut accepted = BTreeSet::new();
    for c in order {
        let p = c.position;
        let lo = p.saturating_sub(s_min - 1);
        let hi = p.saturating_add(s_min - 1);
        if accepted.range(lo..=hi).next().is_none() {
            accepted.insert(p);
        }
    }
    accepted.into_iter().collect()
}

/// Everything the detector computed for one series.
#[derive(Clone, Debug)]
pub struct Detection {
    pub segmentation: Segmentation,
    /// One entry per evaluated scale, ascending.
    pub scale_stats: Vec<ScaleStats>,
    /// All scored positions before thresholding, grouped by ascending scale.
    pub scored: Vec<ChangeCandidate>,
    /// Thresholded candidates after the cross-scale merge.
    pub candidates: Vec<ChangeCandidate>,
}

/// Runs the full detector and keeps the intermediate artifacts.
pub fn detect(series: &TimeSeries, cfg: &TokenizerConfig) -> Result<Detection> {
    cfg.validate()?;
    let scales: Vec<usize> = cfg.scales_for(series.len()).collect();

    let per_scale: Vec<(Vec<ChangeCandidate>, ScaleStats, Vec<ChangeCandidate>)> = scales
        .par_iter()
        .map(|&delta| {
            let scored = score_scale(series, delta, cfg)?;
            let (stats, kept) = threshold_candidates(&scored, cfg.alpha)?;
            Ok((scored, stats, kept))
        })
        .collect::<Result<_>>()?;

    let mut scored = Vec::new();
    let mut scale_stats = Vec::with_capacity(per_scale.len());
    let mut pooled = Vec::new();
    for (s, stats, kept) in per_scale {
        scored.extend(s);
        scale_stats.push(stats);
        pooled.extend(kept);
    }
    let candidates = merge_candidates(pooled);
    let splits = non_maximum_suppression(&candidates, cfg.s_min);
    Ok(Detection {
        segmentation: Segmentation::new(series.len(), splits)?,
        scale_stats,
        scored,
        candidates,
    })
}

/// Detects split points. Series shorter than `2·delta_min` yield one segment.
pub fn detect_splits(series: &TimeSeries, cfg: &TokenizerConfig) -> Result<Segmentation> {
    detect(series, cfg).map(|d| d.segmentation)
}

/// Global penalized cost `Σ_i ( −(|S_i|/2) log|Σ_i| + (k/2) log|S_i| )`.
///
/// Diagnostic only; the detector never optimizes it. Length-1 segments use
/// `Σ = εI`.
pub fn segmentation_cost(
    series: &TimeSeries,
    seg: &Segmentation,
    cfg: &TokenizerConfig,
) -> Result<f64> {
    if seg.length() != series.len() {
        return Err(Error::invalid(format!(
            "segmentation covers {} timesteps but the series has {}",
            seg.length(),
            series.len()
        )));
    }
    let dim = series.dim();
    let k = gaussian::free_parameters(dim) as f64;
    let mut total = 0.0;
    for range in seg.segments() {
        let n = range.len();
        let log_det = if n == 1 {
            if cfg.epsilon <= 0.0 {
                return Err(Error::SingularCovariance);
            }
            dim as f64 * cfg.epsilon.ln()
        } else {
            gaussian::ml_covariance(series.rows(range.start, range.end), dim, cfg.epsilon)?.log_det
        };
        let n = n as f64;
        total += -0.5 * n * log_det + 0.5 * k * n.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(position: usize, score: f64, scale: usize) -> ChangeCandidate {
        ChangeCandidate {
            position,
            score,
            scale,
        }
    }

    fn step_series(len: usize, at: usize, low: f64, high: f64) -> TimeSeries {
        // Deterministic low-amplitude wiggle so windows are not degenerate.
        let values = (0..len)
            .map(|t| {
                let base = if t < at { low } else { high };
                base + 0.1 * ((t * 7919 % 13) as f64 / 13.0 - 0.5)
            })
            .collect();
        TimeSeries::univariate("step", values).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = TokenizerConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.delta_min, cfg.delta_max, cfg.delta_step), (5, 500, 5));
        assert_eq!((cfg.stride, cfg.s_min), (10, 20));
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg.epsilon, 1e-6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TokenizerConfig::default();
        for bad in [
            TokenizerConfig {
                delta_min: 1,
                ..base.clone()
            },
            TokenizerConfig {
                delta_max: 4,
                ..base.clone()
            },
            TokenizerConfig {
                delta_step: 0,
                ..base.clone()
            },
            TokenizerConfig {
                stride: 0,
                ..base.clone()
            },
            TokenizerConfig {
                alpha: -1.0,
                ..base.clone()
            },
            TokenizerConfig {
                s_min: 0,
                ..base.clone()
            },
            TokenizerConfig {
                epsilon: -1e-3,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn scales_are_clamped_to_half_length() {
        let cfg = TokenizerConfig::default();
        let scales: Vec<usize> = cfg.scales_for(100).collect();
        assert_eq!(scales.first(), Some(&5));
        assert_eq!(scales.last(), Some(&50));
        assert_eq!(cfg.scales_for(9).count(), 0);
    }

    #[test]
    fn grid_positions_respect_window_bounds() {
        let series = step_series(100, 50, 0.0, 1.0);
        let cfg = TokenizerConfig::default();
        let positions: Vec<usize> = score_scale(&series, 40, &cfg)
            .unwrap()
            .iter()
            .map(|c| c.position)
            .collect();
        assert_eq!(positions, vec![40, 50, 60]);
        assert!(matches!(
            score_scale(&series, 51, &cfg),
            Err(Error::EmptyScale {
                delta: 51,
                len: 100
            })
        ));
    }

    #[test]
    fn constant_series_scores_equal_penalty() {
        let series = TimeSeries::univariate("c", vec![3.0; 120]).unwrap();
        let cfg = TokenizerConfig::default();
        for delta in [5, 20, 60] {
            for c in score_scale(&series, delta, &cfg).unwrap() {
                assert!((c.score - 2.0 * (2.0 * delta as f64).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn step_peaks_at_the_change() {
        let series = step_series(200, 100, 0.0, 5.0);
        let scored = score_scale(&series, 20, &TokenizerConfig::default()).unwrap();
        let best = scored
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .unwrap();
        assert_eq!(best.position, 100);
    }

    #[test]
    fn threshold_arithmetic() {
        let scored: Vec<_> = [0.0, 0.0, 0.0, 10.0]
            .iter()
            .zip([10, 20, 30, 40])
            .map(|(&s, p)| cand(p, s, 5))
            .collect();
        let (stats, kept) = threshold_candidates(&scored, 1.0).unwrap();
        assert!((stats.mu - 2.5).abs() < 1e-12);
        assert!((stats.sigma - 18.75f64.sqrt()).abs() < 1e-12);
        assert!((stats.threshold(1.0) - 6.830_127_018_922_193).abs() < 1e-9);
        assert_eq!(
            kept.iter().map(|c| c.position).collect::<Vec<_>>(),
            vec![40]
        );

        let (stats, kept) = threshold_candidates(&scored, 2.0).unwrap();
        assert!((stats.threshold(2.0) - 11.160_254_037_844_386).abs() < 1e-9);
        assert!(kept.is_empty());
    }

    #[test]
    fn flat_scores_yield_nothing() {
        let scored: Vec<_> = (0..5).map(|i| cand(10 * i + 10, 4.2, 5)).collect();
        let (stats, kept) = threshold_candidates(&scored, 0.0).unwrap();
        assert_eq!(stats.sigma, 0.0);
        assert!(kept.is_empty());
    }

    #[test]
    fn threshold_errors() {
        assert!(matches!(
            threshold_candidates(&[], 2.0),
            Err(Error::EmptyScale { .. })
        ));
        let mixed = [cand(10, 1.0, 5), cand(20, 2.0, 10)];
        assert!(matches!(
            threshold_candidates(&mixed, 2.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn nms_keeps_the_stronger_neighbour() {
        let kept = non_maximum_suppression(&[cand(100, 10.0, 5), cand(110, 8.0, 5)], 20);
        assert_eq!(kept, vec![100]);
        // Exactly s_min apart is allowed.
        let kept = non_maximum_suppression(&[cand(100, 10.0, 5), cand(120, 8.0, 5)], 20);
        assert_eq!(kept, vec![100, 120]);
    }

    #[test]
    fn nms_ties_prefer_lower_position() {
        let kept = non_maximum_suppression(&[cand(110, 5.0, 5), cand(100, 5.0, 5)], 20);
        assert_eq!(kept, vec![100]);
    }

    #[test]
    fn merge_keeps_max_score_per_position() {
        let merged = merge_candidates(vec![cand(50, 3.0, 5), cand(40, 1.0, 5), cand(50, 7.0, 10)]);
        assert_eq!(merged, vec![cand(40, 1.0, 5), cand(50, 7.0, 10)]);
    }

    #[test]
    fn constant_series_gives_one_segment() {
        let series = TimeSeries::univariate("c", vec![1.5; 300]).unwrap();
        let seg = detect_splits(&series, &TokenizerConfig::default()).unwrap();
        assert!(seg.splits().is_empty());
        assert_eq!(seg.segments(), vec![0..300]);
    }

    #[test]
    fn short_series_gives_one_segment() {
        let series = TimeSeries::univariate("s", vec![0.0, 1.0, 5.0, 2.0, 9.0, 1.0, 0.0]).unwrap();
        let seg = detect_splits(&series, &TokenizerConfig::default()).unwrap();
        assert_eq!(seg.segment_count(), 1);
    }

    #[test]
    fn segmentation_validation() {
        assert!(Segmentation::new(10, vec![0]).is_err());
        assert!(Segmentation::new(10, vec![10]).is_err());
        assert!(Segmentation::new(10, vec![5, 5]).is_err());
        assert!(Segmentation::new(10, vec![6, 3]).is_err());
        let seg = Segmentation::new(10, vec![3, 7]).unwrap();
        assert_eq!(seg.segments(), vec![0..3, 3..7, 7..10]);
    }

    #[test]
    fn cost_of_single_constant_segment() {
        let series = TimeSeries::univariate("c", vec![2.0; 100]).unwrap();
        let cfg = TokenizerConfig::default();
        let cost = segmentation_cost(&series, &Segmentation::single(100), &cfg).unwrap();
        let expected = -50.0 * (1e-6f64).ln() + 100f64.ln();
        assert!((cost - expected).abs() < 1e-9);
        assert!((cost - 695.381).abs() < 1e-3);
        let empty = Segmentation::new(100, vec![]).unwrap();
        assert_eq!(segmentation_cost(&series, &empty, &cfg).unwrap(), cost);
    }

    #[test]
    fn cost_handles_singletons_and_rejects_mismatch() {
        let series = TimeSeries::univariate("c", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cfg = TokenizerConfig::default();
        let seg = Segmentation::new(4, vec![1]).unwrap();
        let var = ((2.0f64 - 3.0).powi(2) * 2.0) / 3.0 + 1e-6;
        let expected = -0.5 * (1e-6f64).ln() + 0.0 + (-1.5 * var.ln() + 3f64.ln());
        assert!((segmentation_cost(&series, &seg, &cfg).unwrap() - expected).abs() < 1e-9);
        let wrong = Segmentation::single(5);
        assert!(matches!(
            segmentation_cost(&series, &wrong, &cfg),
            Err(Error::InvalidInput(_))
        ));
    }
}

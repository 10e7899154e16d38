// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segment summarizers: mean pooling, per-segment GMM, and fixed-chunk (PAA) pooling.

mod gmm;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::tokenizer::Segmentation;

pub use gmm::{fit_gmm, GmmModel, CONVERGENCE_TOL, MAX_ITERATIONS, VARIANCE_FLOOR};

pub const DEFAULT_COMPONENTS: usize = 5;
pub const DEFAULT_CHUNKS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryMethod {
    Mean,
    Gmm,
    Uniform,
}

impl SummaryMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Gmm => "gmm",
            Self::Uniform => "uniform",
        }
    }
}

impl fmt::Display for SummaryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SummaryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "gmm" => Ok(Self::Gmm),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::invalid(format!(
                "unknown summary method `{other}` (expected mean, gmm, or uniform)"
            ))),
        }
    }
}

/// A token matrix (`T' × d`, row-major) with the source range of every token.
#[derive(Clone, Debug, PartialEq)]
pub struct SummarizedSeries {
    pub dim: usize,
    pub tokens: Vec<f64>,
    pub provenance: Vec<Range<usize>>,
    pub method: SummaryMethod,
    /// Per-token component variances (`T' × d`); GMM summaries only.
    pub variances: Option<Vec<f64>>,
    /// Per-token mixture weights; GMM summaries only.
    pub weights: Option<Vec<f64>>,
}

impl SummarizedSeries {
    pub fn token_count(&self) -> usize {
        self.provenance.len()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.tokens[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.tokens.chunks_exact(self.dim)
    }
}

fn check_segmentation(series: &TimeSeries, seg: &Segmentation) -> Result<()> {
    if seg.length() != series.len() {
        return Err(Error::invalid(format!(
            "segmentation covers {} timesteps but the series has {}",
            seg.length(),
            series.len()
        )));
    }
    Ok(())
}

fn mean_of_rows(series: &TimeSeries, range: &Range<usize>) -> Vec<f64> {
    let dim = series.dim();
    let mut acc = vec![0.0; dim];
    for row in series.rows(range.start, range.end).chunks_exact(dim) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let n = range.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn pooled_summary(
    series: &TimeSeries,
    ranges: Vec<Range<usize>>,
    method: SummaryMethod,
) -> SummarizedSeries {
    let tokens = ranges
        .iter()
        .flat_map(|r| mean_of_rows(series, r))
        .collect();
    SummarizedSeries {
        dim: series.dim(),
        tokens,
        provenance: ranges,
        method,
        variances: None,
        weights: None,
    }
}

/// One token per segment: the arithmetic mean of the segment's rows.
pub fn summarize_mean(series: &TimeSeries, seg: &Segmentation) -> Result<SummarizedSeries> {
    check_segmentation(series, seg)?;
    Ok(pooled_summary(series, seg.segments(), SummaryMethod::Mean))
}

/// `components` tokens per segment: GMM component means ordered by weight.
///
/// Segments shorter than `2·components` fall back to a single mean token.
pub fn summarize_gmm(
    series: &TimeSeries,
    seg: &Segmentation,
    components: usize,
    seed: u64,
) -> Result<SummarizedSeries> {
    check_segmentation(series, seg)?;
    if components == 0 {
        return Err(Error::invalid("component count must be >= 1"));
    }
    let dim = series.dim();

    struct Part {
        tokens: Vec<f64>,
        variances: Vec<f64>,
        weights: Vec<f64>,
        count: usize,
    }

    let parts: Vec<Part> = seg
        .segments()
        .into_par_iter()
        .map(|range| {
            let points = series.rows(range.start, range.end);
            if range.len() < 2 * components {
                let mean = mean_of_rows(series, &range);
                let n = range.len() as f64;
                let mut var = vec![0.0; dim];
                for row in points.chunks_exact(dim) {
                    for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                        *v += (x - m).powi(2) / n;
                    }
                }
                var.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));
                return Ok(Part {
                    tokens: mean,
                    variances: var,
                    weights: vec![1.0],
                    count: 1,
                });
            }
            let model = fit_gmm(points, dim, components, seed)?;
            let order = model.order_by_weight();
            Ok(Part {
                tokens: order.iter().flat_map(|&j| model.mean(j).to_vec()).collect(),
                variances: order
                    .iter()
                    .flat_map(|&j| model.variance(j).to_vec())
                    .collect(),
                weights: order.iter().map(|&j| model.weights[j]).collect(),
                count: components,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = SummarizedSeries {
        dim,
        tokens: Vec::new(),
        provenance: Vec::new(),
        method: SummaryMethod::Gmm,
        variances: Some(Vec::new()),
        weights: Some(Vec::new()),
    };
    for (range, part) in seg.segments().into_iter().zip(parts) {
        out.tokens.extend(part.tokens);
        out.provenance
            .extend(std::iter::repeat_n(range, part.count));
        out.variances.as_mut().unwrap().extend(part.variances);
        out.weights.as_mut().unwrap().extend(part.weights);
    }
    Ok(out)
}

/// Chunk boundaries `round(i·T/n)` for `i = 0..=n`, with empty chunks dropped.
pub fn uniform_ranges(len: usize, n_chunks: usize) -> Vec<Range<usize>> {
    let bound = |i: usize| (2 * i * len + n_chunks) / (2 * n_chunks);
    (0..n_chunks)
        .map(|i| bound(i)..bound(i + 1))
        .filter(|r| !r.is_empty())
        .collect()
}

/// Mean-pools `n_chunks` equally sized chunks, ignoring signal content.
pub fn summarize_uniform(series: &TimeSeries, n_chunks: usize) -> Result<SummarizedSeries> {
    if n_chunks == 0 {
        return Err(Error::invalid("n_chunks must be >= 1"));
    }
    Ok(pooled_summary(
        series,
        uniform_ranges(series.len(), n_chunks),
        SummaryMethod::Uniform,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            SummaryMethod::Mean,
            SummaryMethod::Gmm,
            SummaryMethod::Uniform,
        ] {
            assert_eq!(m.as_str().parse::<SummaryMethod>().unwrap(), m);
        }
        assert!("median".parse::<SummaryMethod>().is_err());
    }

    #[test]
    fn mean_of_constant_segment() {
        let s = TimeSeries::new("c", [4.0, -2.0].repeat(6), 2).unwrap();
        let out = summarize_mean(&s, &Segmentation::single(6)).unwrap();
        assert_eq!(out.token_count(), 1);
        assert_eq!(out.token(0), &[4.0, -2.0]);
    }

    #[test]
    fn mean_of_two_rows() {
        let s = TimeSeries::from_rows("r", &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = summarize_mean(&s, &Segmentation::single(2)).unwrap();
        assert_eq!(out.token(0), &[2.0, 3.0]);
        assert_eq!(out.provenance, vec![0..2]);
    }

    #[test]
    fn mean_rejects_mismatched_segmentation() {
        let s = TimeSeries::univariate("r", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(summarize_mean(&s, &Segmentation::single(4)).is_err());
    }

    #[test]
    fn uniform_singleton_chunks_reproduce_rows() {
        let values: Vec<f64> = (0..10).map(|v| v as f64 * 1.5).collect();
        let s = TimeSeries::univariate("u", values.clone()).unwrap();
        let out = summarize_uniform(&s, 10).unwrap();
        assert_eq!(out.tokens, values);
    }

    #[test]
    fn uniform_boundaries_round_half_up() {
        let starts: Vec<usize> = uniform_ranges(25, 10).iter().map(|r| r.start).collect();
        assert_eq!(starts, vec![0, 3, 5, 8, 10, 13, 15, 18, 20, 23]);
        assert_eq!(uniform_ranges(25, 10).last().unwrap().end, 25);

        let values: Vec<f64> = (0..25).map(|v| (v * v) as f64).collect();
        let s = TimeSeries::univariate("u", values.clone()).unwrap();
        let out = summarize_uniform(&s, 10).unwrap();
        for (i, r) in out.provenance.iter().enumerate() {
            let expected = values[r.clone()].iter().sum::<f64>() / r.len() as f64;
            assert_eq!(out.token(i), &[expected]);
        }
    }

    #[test]
    fn uniform_short_series_and_errors() {
        let s = TimeSeries::univariate("u", vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(summarize_uniform(&s, 10).unwrap().token_count(), 3);
        assert!(summarize_uniform(&s, 0).is_err());
        let c = TimeSeries::univariate("c", vec![7.0; 33]).unwrap();
        assert!(summarize_uniform(&c, 10)
            .unwrap()
            .tokens
            .iter()
            .all(|&t| t == 7.0));
    }

    #[test]
    fn gmm_small_segment_falls_back_to_mean() {
        let s = TimeSeries::univariate("g", vec![3.0; 9]).unwrap();
        let out = summarize_gmm(&s, &Segmentation::single(9), 5, 1).unwrap();
        assert_eq!(out.tokens, vec![3.0]);
        assert_eq!(out.weights, Some(vec![1.0]));
    }

    #[test]
    fn gmm_emits_k_tokens_per_large_segment() {
        let values: Vec<f64> = (0..240).map(|t| ((t * 37) % 17) as f64).collect();
        let s = TimeSeries::univariate("g", values).unwrap();
        let splits: Vec<usize> = (1..12).map(|i| i * 20).collect();
        let seg = Segmentation::new(240, splits).unwrap();
        let out = summarize_gmm(&s, &seg, 5, 3).unwrap();
        assert_eq!(seg.segment_count(), 12);
        assert_eq!(out.token_count(), 60);
        assert_eq!(out.variances.as_ref().unwrap().len(), 60);
        for chunk in out.weights.as_ref().unwrap().chunks(5) {
            assert!(chunk.windows(2).all(|w| w[0] >= w[1]));
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

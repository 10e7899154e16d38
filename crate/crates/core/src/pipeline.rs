// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end summarization: z-normalize, detect splits, summarize.

use rayon::prelude::*;

use crate::dataio::znormalize;
use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::summarizer::{
    self, SummarizedSeries, SummaryMethod, DEFAULT_CHUNKS, DEFAULT_COMPONENTS,
};
use crate::tokenizer::{self, ScaleStats, Segmentation, TokenizerConfig};

/// Which summarizer to run and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SummaryOptions {
    pub method: SummaryMethod,
    /// Mixture components per segment (GMM only).
    pub components: usize,
    /// Chunk count (uniform only).
    pub chunks: usize,
    pub seed: u64,
}

impl SummaryOptions {
    pub fn new(method: SummaryMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            method: SummaryMethod::Mean,
            components: DEFAULT_COMPONENTS,
            chunks: DEFAULT_CHUNKS,
            seed: 0,
        }
    }
}

/// Output of [`stats_summarize`] with every intermediate artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsResult {
    pub input_id: String,
    pub label: Option<String>,
    pub config: TokenizerConfig,
    pub options: SummaryOptions,
    /// Detected splits, or the chunk boundaries for the uniform method.
    pub segmentation: Segmentation,
    pub summary: SummarizedSeries,
    pub scale_stats: Vec<ScaleStats>,
    /// `T / T'`.
    pub compression_ratio: f64,
}

/// Summarizes one series.
///
/// Short and constant series never fail; they collapse to a single segment.
pub fn stats_summarize(
    series: &TimeSeries,
    cfg: &TokenizerConfig,
    options: &SummaryOptions,
) -> Result<StatsResult> {
    cfg.validate()?;
    let normalized = znormalize(series);

    let (segmentation, scale_stats, summary) = match options.method {
        SummaryMethod::Uniform => {
            let summary = summarizer::summarize_uniform(&normalized, options.chunks)?;
            let splits = summary.provenance.iter().skip(1).map(|r| r.start).collect();
            (
                Segmentation::new(series.len(), splits)?,
                Vec::new(),
                summary,
            )
        }
        method => {
            let detection = tokenizer::detect(&normalized, cfg)?;
            let summary = if method == SummaryMethod::Gmm {
                summarizer::summarize_gmm(
                    &normalized,
                    &detection.segmentation,
                    options.components,
                    options.seed,
                )?
            } else {
                summarizer::summarize_mean(&normalized, &detection.segmentation)?
            };
            (detection.segmentation, detection.scale_stats, summary)
        }
    };

    let tokens = summary.token_count();
    if tokens == 0 {
        return Err(Error::invalid("summarizer produced no tokens"));
    }
    Ok(StatsResult {
        input_id: series.id().to_string(),
        label: series.label().map(str::to_string),
        config: cfg.clone(),
        options: *options,
        segmentation,
        summary,
        scale_stats,
        compression_ratio: series.len() as f64 / tokens as f64,
    })
}

/// Summarizes many series in parallel; results keep input order.
pub fn stats_summarize_batch(
    series: &[TimeSeries],
    cfg: &TokenizerConfig,
    options: &SummaryOptions,
) -> Result<Vec<StatsResult>> {
    series
        .par_iter()
        .map(|s| stats_summarize(s, cfg, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_one_token() {
        let s = TimeSeries::univariate("c", vec![3.3; 100]).unwrap();
        let r =
            stats_summarize(&s, &TokenizerConfig::default(), &SummaryOptions::default()).unwrap();
        assert_eq!(r.summary.token_count(), 1);
        assert_eq!(r.compression_ratio, 100.0);
        assert_eq!(r.summary.tokens, vec![0.0]);
    }

    #[test]
    fn single_timestep_never_fails() {
        let s = TimeSeries::univariate("one", vec![5.0]).unwrap();
        for method in [
            SummaryMethod::Mean,
            SummaryMethod::Gmm,
            SummaryMethod::Uniform,
        ] {
            let r = stats_summarize(
                &s,
                &TokenizerConfig::default(),
                &SummaryOptions::new(method),
            )
            .unwrap();
            assert_eq!(r.summary.token_count(), 1, "{method}");
        }
    }

    #[test]
    fn uniform_ignores_content() {
        let s = TimeSeries::univariate("u", (0..57).map(|v| (v as f64).sin()).collect()).unwrap();
        let r = stats_summarize(
            &s,
            &TokenizerConfig::default(),
            &SummaryOptions::new(SummaryMethod::Uniform),
        )
        .unwrap();
        assert_eq!(r.summary.token_count(), 10);
        assert_eq!(r.segmentation.segments(), r.summary.provenance);
        assert!(r.scale_stats.is_empty());
    }

    #[test]
    fn mean_provenance_matches_segments() {
        let mut values = vec![0.0; 150];
        values.extend(vec![6.0; 150]);
        for (i, v) in values.iter_mut().enumerate() {
            *v += ((i * 7919) % 101) as f64 / 101.0 - 0.5;
        }
        let s = TimeSeries::univariate("m", values).unwrap();
        let r =
            stats_summarize(&s, &TokenizerConfig::default(), &SummaryOptions::default()).unwrap();
        assert_eq!(r.segmentation.segments(), r.summary.provenance);
        assert!(r
            .segmentation
            .splits()
            .iter()
            .any(|&p| p.abs_diff(150) <= 20));
        assert_eq!(r.compression_ratio, 300.0 / r.summary.token_count() as f64);
    }
}

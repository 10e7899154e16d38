// SPDX-License-Identifier: MIT OR Apache-2.0

//! Change-point scoring, DTW 1-NN classification, and the noise-robustness runner.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::znormalize;
use crate::error::{Error, Result};
use crate::pipeline::{stats_summarize, stats_summarize_batch, StatsResult, SummaryOptions};
use crate::series::{Dataset, TimeSeries};
use crate::summarizer::SummaryMethod;
use crate::synth::add_gaussian_noise;
use crate::tokenizer::TokenizerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tol: usize,
}

/// Running totals for micro-averaged change-point scores over many series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChangePointTally {
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl ChangePointTally {
    pub fn add(&mut self, predicted: &[usize], truth: &[usize], tol: usize) -> Result<()> {
        self.matched += match_change_points(predicted, truth, tol)?;
        self.predicted += predicted.len();
        self.truth += truth.len();
        Ok(())
    }

    pub fn score(&self, tol: usize) -> PrfScore {
        prf_from_counts(self.matched, self.predicted, self.truth, tol)
    }
}

fn ratio_or_convention(matched: usize, denominator: usize, other: usize) -> f64 {
    match (denominator, other) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (d, _) => matched as f64 / d as f64,
    }
}

fn prf_from_counts(matched: usize, predicted: usize, truth: usize, tol: usize) -> PrfScore {
    let precision = ratio_or_convention(matched, predicted, truth);
    let recall = ratio_or_convention(matched, truth, predicted);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrfScore {
        precision,
        recall,
        f1,
        tol,
    }
}

fn check_sorted(points: &[usize], name: &str) -> Result<()> {
    if points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid(format!(
            "{name} split list is not sorted ascending"
        )));
    }
    Ok(())
}

/// Size of a one-to-one matching between predictions and truths within `±tol`.
///
/// Both lists are walked in ascending order and each prediction takes the
/// earliest still-unmatched truth it can reach; on sorted points this yields
/// a maximum matching, so the count is the same with the roles swapped.
pub fn match_change_points(predicted: &[usize], truth: &[usize], tol: usize) -> Result<usize> {
    check_sorted(predicted, "predicted")?;
    check_sorted(truth, "truth")?;
    let mut matched = 0;
    let mut j = 0;
    for &p in predicted {
        while j < truth.len() && truth[j] + tol < p {
            j += 1;
        }
        if j < truth.len() && truth[j] <= p + tol {
            matched += 1;
            j += 1;
        }
    }
    Ok(matched)
}

/// Precision, recall, and F1 of `predicted` against `truth` at tolerance `tol`.
///
/// Two empty lists score `(1, 1, 1)`; an empty list against a non-empty one scores zero.
pub fn change_point_prf(predicted: &[usize], truth: &[usize], tol: usize) -> Result<PrfScore> {
    let matched = match_change_points(predicted, truth, tol)?;
    Ok(prf_from_counts(matched, predicted.len(), truth.len(), tol))
}

/// DTW with squared-Euclidean local cost and unit steps. Inputs are row-major
/// token sequences with `dim` channels.
pub fn dtw_distance(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::invalid(
            "token sequences do not have the stated width",
        ));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("token sequences must be non-empty"));
    }
    let m = b.len() / dim;
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for x in a.chunks_exact(dim) {
        curr[0] = f64::INFINITY;
        for (j, y) in b.chunks_exact(dim).enumerate() {
            let cost: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            curr[j + 1] = cost + prev[j].min(prev[j + 1]).min(curr[j]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// A summarized series with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTokens {
    pub dim: usize,
    pub tokens: Vec<f64>,
    pub label: String,
}

impl LabeledTokens {
    pub fn from_result(result: &StatsResult) -> Result<Self> {
        let label = result
            .label
            .clone()
            .ok_or_else(|| Error::invalid(format!("series `{}` has no label", result.input_id)))?;
        Ok(Self {
            dim: result.summary.dim,
            tokens: result.summary.tokens.clone(),
            label,
        })
    }
}

/// 1-nearest-neighbour accuracy under [`dtw_distance`]; ties go to the earliest training item.
pub fn knn1_accuracy(train: &[LabeledTokens], test: &[LabeledTokens]) -> Result<f64> {
    let Some(first) = train.first() else {
        return Err(Error::invalid("training set is empty"));
    };
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let dim = first.dim;
    if train.iter().chain(test).any(|t| t.dim != dim) {
        return Err(Error::invalid("token dimensionality differs across items"));
    }
    let correct = test
        .par_iter()
        .map(|query| -> Result<usize> {
            let mut best = (f64::INFINITY, 0);
            for (i, candidate) in train.iter().enumerate() {
                let d = dtw_distance(&query.tokens, &candidate.tokens, dim)?;
                if d < best.0 {
                    best = (d, i);
                }
            }
            Ok(usize::from(train[best.1].label == query.label))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub mean_original_length: f64,
    pub mean_token_count: f64,
    pub ratio: f64,
}

impl CompressionStats {
    pub fn from_results(results: &[StatsResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::invalid("no results to aggregate"));
        }
        let n = results.len() as f64;
        let mean_original_length = results
            .iter()
            .map(|r| r.segmentation.length() as f64)
            .sum::<f64>()
            / n;
        let mean_token_count = results
            .iter()
            .map(|r| r.summary.token_count() as f64)
            .sum::<f64>()
            / n;
        Ok(Self {
            mean_original_length,
            mean_token_count,
            ratio: mean_original_length / mean_token_count,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub config: TokenizerConfig,
    pub components: usize,
    pub chunks: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Method whose clean test summaries the `compression` block describes.
    pub compression_method: SummaryMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_point: Option<PrfScore>,
    pub compression: CompressionStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<BTreeMap<String, f64>>,
    /// `sigma → method → accuracy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    pub metadata: ReportMetadata,
}

fn labeled(results: &[StatsResult]) -> Result<Vec<LabeledTokens>> {
    results.iter().map(LabeledTokens::from_result).collect()
}

fn check_split(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.dim() != test.dim() {
        return Err(Error::invalid(format!(
            "train has {} channels but test has {}",
            train.dim(),
            test.dim()
        )));
    }
    Ok(())
}

/// Summarizes both splits with each method and records 1-NN accuracy per method.
pub fn run_classification(
    train: &Dataset,
    test: &Dataset,
    methods: &[SummaryMethod],
    cfg: &TokenizerConfig,
    options: &SummaryOptions,
) -> Result<EvalReport> {
    check_split(train, test)?;
    let Some(&first) = methods.first() else {
        return Err(Error::invalid("no summary methods given"));
    };
    let mut accuracies = BTreeMap::new();
    let mut compression = None;
    for &method in methods {
        let opts = SummaryOptions { method, ..*options };
        let train_res = stats_summarize_batch(&train.series, cfg, &opts)?;
        let test_res = stats_summarize_batch(&test.series, cfg, &opts)?;
        if compression.is_none() {
            compression = Some(CompressionStats::from_results(&test_res)?);
        }
        let acc = knn1_accuracy(&labeled(&train_res)?, &labeled(&test_res)?)?;
        accuracies.insert(method.to_string(), acc);
    }
    Ok(EvalReport {
        change_point: None,
        compression: compression.expect("at least one method"),
        classification: Some(accuracies),
        noise: None,
        metadata: metadata(train, test, cfg, options, first),
    })
}

fn metadata(
    train: &Dataset,
    test: &Dataset,
    cfg: &TokenizerConfig,
    options: &SummaryOptions,
    compression_method: SummaryMethod,
) -> ReportMetadata {
    ReportMetadata {
        seed: options.seed,
        config: cfg.clone(),
        components: options.components,
        chunks: options.chunks,
        train_size: train.len(),
        test_size: test.len(),
        compression_method,
    }
}

/// Seed of the noise draw for one `(sigma, test series)` cell.
pub fn noise_seed(seed: u64, sigma_index: usize, series_index: usize) -> u64 {
    // splitmix64 finalizer over the packed cell coordinates.
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + sigma_index as u64))
        .wrapping_add((series_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Test-time corruption: z-normalize, then add `N(0, sigma²)`. `sigma = 0` is the identity.
pub fn corrupt(series: &TimeSeries, sigma: f64, seed: u64) -> Result<TimeSeries> {
    if sigma == 0.0 {
        return Ok(series.clone());
    }
    add_gaussian_noise(&znormalize(series), sigma, seed)
}

fn sigma_key(sigma: f64) -> String {
    format!("{sigma}")
}

/// For every `(sigma, method)` cell: corrupt the test split (train stays
/// clean), summarize both, and record 1-NN accuracy.
pub fn run_noise_experiment(
    train: &Dataset,
    test: &Dataset,
    sigmas: &[f64],
    methods: &[SummaryMethod],
    cfg: &TokenizerConfig,
    options: &SummaryOptions,
) -> Result<EvalReport> {
    check_split(train, test)?;
    let Some(&first) = methods.first() else {
        return Err(Error::invalid("no summary methods given"));
    };
    if sigmas.is_empty() {
        return Err(Error::invalid("no noise levels given"));
    }
    if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!(
            "noise sigma must be >= 0, got {bad}"
        )));
    }

    let mut clean_train = BTreeMap::new();
    for &method in methods {
        let opts = SummaryOptions { method, ..*options };
        let res = stats_summarize_batch(&train.series, cfg, &opts)?;
        clean_train.insert(method, labeled(&res)?);
    }

    let mut noise = BTreeMap::new();
    let mut compression = None;
    for (si, &sigma) in sigmas.iter().enumerate() {
        let corrupted: Vec<TimeSeries> = test
            .series
            .par_iter()
            .enumerate()
            .map(|(ti, s)| corrupt(s, sigma, noise_seed(options.seed, si, ti)))
            .collect::<Result<_>>()?;
        let mut cell = BTreeMap::new();
        for &method in methods {
            let opts = SummaryOptions { method, ..*options };
            let test_res: Vec<StatsResult> = corrupted
                .par_iter()
                .map(|s| stats_summarize(s, cfg, &opts))
                .collect::<Result<_>>()?;
            if compression.is_none() {
                compression = Some(CompressionStats::from_results(&test_res)?);
            }
            let acc = knn1_accuracy(&clean_train[&method], &labeled(&test_res)?)?;
            cell.insert(method.to_string(), acc);
        }
        noise.insert(sigma_key(sigma), cell);
    }

    Ok(EvalReport {
        change_point: None,
        compression: compression.expect("at least one cell"),
        classification: None,
        noise: Some(noise),
        metadata: metadata(train, test, cfg, options, first),
    })
}

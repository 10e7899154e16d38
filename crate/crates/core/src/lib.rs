// SPDX-License-Identifier: MIT OR Apache-2.0

//! Structure-aware time-series summarization.
//!
//! A series is cut into statistically coherent segments by comparing adjacent
//! windows with a full-covariance Gaussian BIC score at many scales, and each
//! segment is replaced by a short summary (its mean by default). The crate
//! also ships seeded synthetic generators and a small evaluation harness.

#![forbid(unsafe_code)]

pub mod dataio;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod pipeline;
pub mod series;
pub mod summarizer;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
pub use eval::{EvalReport, PrfScore};
pub use pipeline::{stats_summarize, StatsResult, SummaryOptions};
pub use series::{Dataset, TimeSeries};
pub use summarizer::{SummarizedSeries, SummaryMethod};
pub use tokenizer::{detect_splits, ChangeCandidate, ScaleStats, Segmentation, TokenizerConfig};

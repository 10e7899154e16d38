// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors raised by the segmentation, summarization, and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    /// Scale `delta` cannot be evaluated on a series of length `len`.
    /// Callers skip the scale; this is not a failure of the detector.
    #[error("scale {delta} is inapplicable to a series of length {len}")]
    EmptyScale { delta: usize, len: usize },

    #[error("too few points for a {components}-component mixture: {points} < {needed}")]
    TooFewPoints {
        points: usize,
        components: usize,
        needed: usize,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("dataset `{0}` contains no series")]
    EmptyDataset(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Self::InvalidInput(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Self::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed data rather than misuse of the API.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Self::Parse { .. } | Self::EmptyDataset(_) | Self::Schema(_) | Self::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

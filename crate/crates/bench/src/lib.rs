// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared fixtures for the criterion benchmarks.

#![forbid(unsafe_code)]

use tokseg_core::synth::{generate_piecewise_gaussian, random_regime_spec};
use tokseg_core::TimeSeries;

/// A seeded four-regime series of length `len` with `dim` channels.
pub fn regime_series(len: usize, dim: usize, seed: u64) -> TimeSeries {
    let spec =
        random_regime_spec(len, 4, dim, len / 10, (3.0, 4.0), seed).expect("fixture spec is valid");
    generate_piecewise_gaussian(&spec, seed)
        .expect("fixture generation succeeds")
        .0
}

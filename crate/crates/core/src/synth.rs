// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded piecewise-stationary Gaussian series and additive noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::series::{Dataset, TimeSeries};

#[derive(Clone, Debug, PartialEq)]
pub struct Regime {
    pub length: usize,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

/// An ordered list of diagonal-Gaussian regimes.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeSpec {
    pub dim: usize,
    pub regimes: Vec<Regime>,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::invalid("regime list is empty"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.length == 0 {
                return Err(Error::invalid(format!("regime {i} has zero length")));
            }
            if r.mean.len() != self.dim || r.stdev.len() != self.dim {
                return Err(Error::invalid(format!(
                    "regime {i} must have {} means and stdevs",
                    self.dim
                )));
            }
            if r.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid(format!("regime {i} has a non-finite mean")));
            }
            if r.stdev.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::invalid(format!(
                    "regime {i} has a negative or non-finite stdev"
                )));
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> usize {
        self.regimes.iter().map(|r| r.length).sum()
    }

    /// Interior regime boundaries.
    pub fn boundaries(&self) -> Vec<usize> {
        self.regimes
            .iter()
            .scan(0, |acc, r| {
                *acc += r.length;
                Some(*acc)
            })
            .take(self.regimes.len() - 1)
            .collect()
    }

    /// Parses the line-based format:
    ///
    /// ```text
    /// dim = 2
    /// regime = 100; 0, 0; 1, 1     # length; means; stdevs
    /// ```
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut raw = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("spec", line_no, "expected `key = value`"))?;
            match key.trim() {
                "dim" => {
                    dim = Some(value.trim().parse::<usize>().map_err(|_| {
                        Error::parse("spec", line_no, format!("bad dim `{}`", value.trim()))
                    })?)
                }
                "regime" => raw.push((line_no, value.to_string())),
                other => {
                    return Err(Error::parse(
                        "spec",
                        line_no,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }

        let floats = |s: &str, line_no: usize| -> Result<Vec<f64>> {
            s.split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::parse("spec", line_no, format!("bad number `{}`", f.trim()))
                    })
                })
                .collect()
        };
        let mut regimes = Vec::with_capacity(raw.len());
        for (line_no, value) in raw {
            let parts: Vec<&str> = value.split(';').collect();
            if parts.len() != 3 {
                return Err(Error::parse(
                    "spec",
                    line_no,
                    "regime needs `length; means; stdevs`",
                ));
            }
            let length = parts[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse("spec", line_no, "bad regime length"))?;
            regimes.push(Regime {
                length,
                mean: floats(parts[1], line_no)?,
                stdev: floats(parts[2], line_no)?,
            });
        }
        let dim = dim
            .or_else(|| regimes.first().map(|r| r.mean.len()))
            .unwrap_or(0);
        let spec = Self { dim, regimes };
        spec.validate()?;
        Ok(spec)
    }
}

/// Samples each regime i.i.d. from its diagonal Gaussian. Returns the series
/// and its interior true split points.
pub fn generate_piecewise_gaussian(
    spec: &RegimeSpec,
    seed: u64,
) -> Result<(TimeSeries, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.total_length() * spec.dim);
    for regime in &spec.regimes {
        for _ in 0..regime.length {
            for (m, s) in regime.mean.iter().zip(&regime.stdev) {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(m + s * z);
            }
        }
    }
    let series = TimeSeries::new(format!("synthetic-{seed}"), values, spec.dim)?;
    Ok((series, spec.boundaries()))
}

/// Adds i.i.d. `N(0, sigma²)` to every entry. `sigma = 0` returns the input unchanged.
pub fn add_gaussian_noise(series: &TimeSeries, sigma: f64, seed: u64) -> Result<TimeSeries> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(series.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = series
        .values()
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    series.with_values(values)
}

/// Random regime layout: `count` regimes of length at least `min_length`
/// summing to `total`, unit stdev, and consecutive means that differ by a
/// magnitude drawn from `[min_shift, max_shift]` in every channel.
pub fn random_regime_spec(
    total: usize,
    count: usize,
    dim: usize,
    min_length: usize,
    (min_shift, max_shift): (f64, f64),
    seed: u64,
) -> Result<RegimeSpec> {
    if count == 0 || dim == 0 || count * min_length > total {
        return Err(Error::invalid(format!(
            "cannot place {count} regimes of length >= {min_length} in {total} steps"
        )));
    }
    if min_shift.is_nan() || max_shift.is_nan() || min_shift > max_shift {
        return Err(Error::invalid("min_shift must not exceed max_shift"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Spread the slack over the regimes with random cut points.
    let slack = total - count * min_length;
    let mut cuts: Vec<usize> = (0..count - 1)
        .map(|_| rng.random_range(0..=slack))
        .collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(slack);

    let mut mean = vec![0.0; dim];
    let mut regimes = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            for m in &mut mean {
                let magnitude = rng.random_range(min_shift..=max_shift);
                *m += if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                };
            }
        }
        regimes.push(Regime {
            length: min_length + cuts[i + 1] - cuts[i],
            mean: mean.clone(),
            stdev: vec![1.0; dim],
        });
    }
    Ok(RegimeSpec { dim, regimes })
}

/// Two-class univariate dataset: every series starts at level 0 and steps to
/// `+level` (class `"up"`) or `-level` (class `"down"`) at a random point in
/// the middle half, with unit-variance noise.
pub fn two_class_step_dataset(
    name: &str,
    per_class: usize,
    len: usize,
    level: f64,
    seed: u64,
) -> Result<Dataset> {
    if len < 8 {
        return Err(Error::invalid("series length must be >= 8"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let (label, target) = if i % 2 == 0 {
            ("up", level)
        } else {
            ("down", -level)
        };
        let change = rng.random_range(len / 4..=3 * len / 4);
        let spec = RegimeSpec {
            dim: 1,
            regimes: vec![
                Regime {
                    length: change,
                    mean: vec![0.0],
                    stdev: vec![1.0],
                },
                Regime {
                    length: len - change,
                    mean: vec![target],
                    stdev: vec![1.0],
                },
            ],
        };
        let (ts, _) = generate_piecewise_gaussian(&spec, rng.random())?;
        let ts = TimeSeries::new(format!("{name}-{i}"), ts.values().to_vec(), 1)?.with_label(label);
        series.push(ts);
    }
    Dataset::new(name, series)
}

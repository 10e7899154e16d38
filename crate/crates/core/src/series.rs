// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};

/// A `T × d` real-valued series stored row-major (one row per timestep).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    id: String,
    len: usize,
    dim: usize,
    values: Vec<f64>,
    label: Option<String>,
}

impl TimeSeries {
    /// Builds a series from row-major `values` with `dim` channels.
    ///
    /// Rejects empty input, a value count that is not a multiple of `dim`,
    /// and non-finite entries.
    pub fn new(id: impl Into<String>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("series dimensionality must be >= 1"));
        }
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one timestep"));
        }
        if values.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at timestep {}, channel {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            id: id.into(),
            len: values.len() / dim,
            dim,
            values,
            label: None,
        })
    }

    /// Builds a univariate series.
    pub fn univariate(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(id, values, 1)
    }

    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have inconsistent widths"));
        }
        Self::new(id, rows.concat(), dim)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of channels `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows `[start, end)` as a contiguous row-major slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        &self.values[start * self.dim..end * self.dim]
    }

    /// Returns a copy with the same id, label, and shape but new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(values.len(), self.values.len());
        let mut out = Self::new(self.id.clone(), values, self.dim)?;
        out.label = self.label.clone();
        Ok(out)
    }
}

/// An ordered collection of series with a common channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub series: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, series: Vec<TimeSeries>) -> Result<Self> {
        let name = name.into();
        let Some(first) = series.first() else {
            return Err(Error::EmptyDataset(name));
        };
        let dim = first.dim();
        if let Some(bad) = series.iter().find(|s| s.dim() != dim) {
            return Err(Error::invalid(format!(
                "series `{}` has {} channels, expected {dim}",
                bad.id(),
                bad.dim()
            )));
        }
        Ok(Self { name, series })
    }

    pub fn dim(&self) -> usize {
        self.series[0].dim()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let err = TimeSeries::new("x", vec![1.0, f64::NAN, 2.0, 3.0], 2).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(ref m) if m.contains("timestep 0, channel 1")));
    }

    #[test]
    fn rejects_ragged_values() {
        assert!(TimeSeries::new("x", vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(TimeSeries::new("x", vec![], 1).is_err());
    }

    #[test]
    fn row_access_is_row_major() {
        let s =
            TimeSeries::from_rows("x", &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.rows(1, 3), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn dataset_requires_consistent_dims() {
        let a = TimeSeries::univariate("a", vec![1.0]).unwrap();
        let b = TimeSeries::new("b", vec![1.0, 2.0], 2).unwrap();
        assert!(Dataset::new("d", vec![a.clone(), b]).is_err());
        assert!(matches!(
            Dataset::new("d", vec![]),
            Err(Error::EmptyDataset(_))
        ));
        assert_eq!(Dataset::new("d", vec![a]).unwrap().dim(), 1);
    }
}

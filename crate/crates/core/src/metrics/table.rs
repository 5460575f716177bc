use ndarray::Array2;

use super::MetricError;
use crate::ot::{ContextDistance, OtError};

const SYM_TOL: f64 = 1e-9;

/// Square table of pairwise distances over an indexed set.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    values: Array2<f64>,
    normalized: bool,
    diagonal_offset: f64,
}

impl DistanceTable {
    /// Validates a raw table: square, finite, nonnegative, symmetric.
    pub fn new(values: Array2<f64>) -> Result<Self, MetricError> {
        let (n, m) = values.dim();
        if n != m {
            return Err(MetricError::Table(format!("{n}x{m} is not square")));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MetricError::Table(format!("entry ({i}, {j}) = {v}")));
            }
            if (v - values[[j, i]]).abs() > SYM_TOL {
                return Err(MetricError::Table(format!("asymmetric at ({i}, {j})")));
            }
        }
        Ok(Self { values, normalized: false, diagonal_offset: 0.0 })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: Array2::zeros((n, n)), normalized: false, diagonal_offset: 0.0 }
    }

    pub(crate) fn from_raw(values: Array2<f64>) -> Self {
        Self { values, normalized: false, diagonal_offset: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn diagonal_offset(&self) -> f64 {
        self.diagonal_offset
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &DistanceTable) -> f64 {
        self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Sub-table on `indices` (rows and columns in the given order).
    pub fn restrict(&self, indices: &[usize]) -> DistanceTable {
        let values = Array2::from_shape_fn((indices.len(), indices.len()), |(i, j)| self.values[[indices[i], indices[j]]]);
        Self { values, normalized: self.normalized, diagonal_offset: self.diagonal_offset }
    }

    /// Adds `relative_offset * max` to the diagonal and scales the maximum to
    /// one. An all-zero table is returned unchanged and stays unnormalized.
    pub fn with_offset_normalized(&self, relative_offset: f64) -> DistanceTable {
        let max = self.max();
        if max == 0.0 {
            return self.clone();
        }
        let offset = relative_offset * max;
        let mut values = self.values.clone();
        for k in 0..values.nrows() {
            values[[k, k]] += offset;
        }
        let scale = values.iter().copied().fold(0.0, f64::max);
        values /= scale;
        Self { values, normalized: true, diagonal_offset: offset / scale }
    }

    /// Scales the maximum entry to one without touching the diagonal.
    pub fn normalize(&self) -> DistanceTable {
        let max = self.max();
        if max == 0.0 {
            return self.clone();
        }
        Self { values: &self.values / max, normalized: true, diagonal_offset: self.diagonal_offset / max }
    }
}

impl ContextDistance<usize> for DistanceTable {
    fn distance(&self, a: &usize, b: &usize) -> Result<f64, OtError> {
        let n = self.len();
        if *a >= n || *b >= n {
            return Err(OtError::Metric { row: *a, col: *b, reason: format!("index outside a table of {n} entries") });
        }
        Ok(self.values[[*a, *b]])
    }
}

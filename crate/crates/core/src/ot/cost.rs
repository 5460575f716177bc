use ndarray::Array2;

use super::OtError;

/// A distance between two contexts of type `C`.
///
/// Discrete context sets use `C = usize` (context index); continuous
/// contexts use `C = [f64]`.
pub trait ContextDistance<C: ?Sized>: Send + Sync {
    fn distance(&self, a: &C, b: &C) -> Result<f64, OtError>;
}

impl<C: ?Sized, D: ContextDistance<C> + ?Sized> ContextDistance<C> for &D {
    fn distance(&self, a: &C, b: &C) -> Result<f64, OtError> {
        (**self).distance(a, b)
    }
}

/// Adapts a plain function into a [`ContextDistance`].
#[derive(Clone, Copy, Debug)]
pub struct FnDistance<F>(pub F);

impl<C: ?Sized, F> ContextDistance<C> for FnDistance<F>
where
    F: Fn(&C, &C) -> f64 + Send + Sync,
{
    fn distance(&self, a: &C, b: &C) -> Result<f64, OtError> {
        Ok((self.0)(a, b))
    }
}

/// Squares another distance; the default ground cost for barycenters.
#[derive(Clone, Copy, Debug)]
pub struct Squared<D>(pub D);

impl<C: ?Sized, D: ContextDistance<C>> ContextDistance<C> for Squared<D> {
    fn distance(&self, a: &C, b: &C) -> Result<f64, OtError> {
        self.0.distance(a, b).map(|d| d * d)
    }
}

/// Squared Euclidean distance on coordinate vectors.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredL2;

impl ContextDistance<[f64]> for SquaredL2 {
    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, OtError> {
        if a.len() != b.len() {
            return Err(OtError::DimensionMismatch { expected: a.len(), got: b.len() });
        }
        Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
    }
}

/// Ground costs between a source and a target support.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self, OtError> {
        if entries.is_empty() {
            return Err(OtError::EmptySupport);
        }
        if let Some(((row, col), &value)) = entries
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(OtError::InvalidCost { row, col, value });
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OtError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(OtError::InvalidParticles("ragged cost rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((n, m), flat)
            .map_err(|e| OtError::InvalidParticles(e.to_string()))?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Elementwise square, e.g. to turn a metric table into a W2 ground cost.
    pub fn squared(&self) -> CostMatrix {
        CostMatrix { entries: self.entries.mapv(|c| c * c) }
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix { entries: self.entries.t().to_owned() }
    }
}

/// `C[i][j] = metric(src[i], tgt[j])`.
pub fn build_cost_matrix<C, T, D>(src: &[T], tgt: &[T], metric: &D) -> Result<CostMatrix, OtError>
where
    C: ?Sized,
    T: AsRef<C>,
    D: ContextDistance<C> + ?Sized,
{
    if src.is_empty() || tgt.is_empty() {
        return Err(OtError::EmptySupport);
    }
    let mut entries = Array2::zeros((src.len(), tgt.len()));
    for (i, a) in src.iter().enumerate() {
        for (j, b) in tgt.iter().enumerate() {
            let value = metric.distance(a.as_ref(), b.as_ref()).map_err(|e| OtError::Metric {
                row: i,
                col: j,
                reason: e.to_string(),
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(OtError::InvalidCost { row: i, col: j, value });
            }
            entries[[i, j]] = value;
        }
    }
    Ok(CostMatrix { entries })
}

/// Cost matrix over index supports, e.g. `0..n` against `0..m`.
pub(crate) fn build_index_cost<D>(src: &[usize], tgt: &[usize], metric: &D) -> Result<CostMatrix, OtError>
where
    D: ContextDistance<usize> + ?Sized,
{
    let src: Vec<Idx> = src.iter().map(|&i| Idx(i)).collect();
    let tgt: Vec<Idx> = tgt.iter().map(|&i| Idx(i)).collect();
    build_cost_matrix::<usize, Idx, D>(&src, &tgt, metric)
}

struct Idx(usize);

impl AsRef<usize> for Idx {
    fn as_ref(&self) -> &usize {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn identical_single_points_cost_zero() {
        let c = build_cost_matrix(&[vec![1.5, 2.0]], &[vec![1.5, 2.0]], &FnDistance(l2)).unwrap();
        assert_eq!(c.entries().as_slice().unwrap(), &[0.0]);
    }

    #[test]
    fn line_distance() {
        let c = build_cost_matrix(&[vec![0.0]], &[vec![3.0]], &FnDistance(l2)).unwrap();
        assert_eq!(c.get(0, 0), 3.0);
    }

    #[test]
    fn squared_l2_column() {
        let c = build_cost_matrix(
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
            &[vec![0.0, 1.0]],
            &SquaredL2,
        )
        .unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 0), 2.0);
    }

    #[test]
    fn non_finite_metric_names_the_pair() {
        let bad = FnDistance(|a: &[f64], _b: &[f64]| if a[0] > 0.5 { f64::NAN } else { 1.0 });
        let err = build_cost_matrix(&[vec![0.0], vec![1.0]], &[vec![0.0]], &bad).unwrap_err();
        assert!(matches!(err, OtError::InvalidCost { row: 1, col: 0, .. }));
    }
}

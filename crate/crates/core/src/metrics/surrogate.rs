use ndarray::Array2;

use super::MetricError;
use crate::ot::{ContextDistance, OtError};

/// Euclidean distance on `dim`-dimensional contexts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Distance {
    dim: usize,
}

pub fn l2_surrogate(dim: usize) -> L2Distance {
    L2Distance { dim }
}

impl ContextDistance<[f64]> for L2Distance {
    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, OtError> {
        for x in [a, b] {
            if x.len() != self.dim {
                return Err(OtError::DimensionMismatch { expected: self.dim, got: x.len() });
            }
        }
        Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
    }
}

/// `|J(a) - J(b)|` for a return estimator `J`.
#[derive(Clone, Copy, Debug)]
pub struct RewardGap<J> {
    j: J,
}

pub fn reward_gap_surrogate<J: Fn(&[f64]) -> f64 + Send + Sync>(j: J) -> RewardGap<J> {
    RewardGap { j }
}

impl<J: Fn(&[f64]) -> f64 + Send + Sync> ContextDistance<[f64]> for RewardGap<J> {
    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, OtError> {
        let (ja, jb) = ((self.j)(a), (self.j)(b));
        if !(ja.is_finite() && jb.is_finite()) {
            return Err(OtError::Metric { row: 0, col: 0, reason: format!("non-finite return estimate {ja} / {jb}") });
        }
        Ok((ja - jb).abs())
    }
}

/// RBF kernel ridge regression of returns on contexts.
///
/// Predictions are `mean + k(c)^T alpha` where `mean` is the sample mean of
/// the targets, so far from the data the model reverts to the mean return.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    centers: Vec<Vec<f64>>,
    coef: Vec<f64>,
    mean: f64,
    bandwidth: f64,
}

impl RewardModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn predict(&self, c: &[f64]) -> f64 {
        let k: f64 = self.centers.iter().zip(&self.coef).map(|(x, a)| a * rbf(x, c, self.bandwidth)).sum();
        self.mean + k
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(a: &[f64], b: &[f64], h: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * h * h)).exp()
}

/// Median pairwise distance, or 1 when every pair coincides.
fn median_heuristic(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Fits `J(c)` from `(context, return)` samples. Repeated contexts are merged
/// (targets averaged) before solving; `bandwidth = None` selects the median
/// pairwise distance.
pub fn fit_reward_model(
    samples: &[(Vec<f64>, f64)],
    bandwidth: Option<f64>,
    ridge: f64,
) -> Result<RewardModel, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Invalid("no reward samples".into()));
    }
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(MetricError::Invalid(format!("ridge must be positive, got {ridge}")));
    }
    let dim = samples[0].0.len();
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (c, r) in samples {
        if c.len() != dim {
            return Err(MetricError::Invalid(format!("context of dimension {} among dimension {dim}", c.len())));
        }
        if !r.is_finite() || c.iter().any(|x| !x.is_finite()) {
            return Err(MetricError::Invalid("non-finite reward sample".into()));
        }
        match centers.iter().position(|x| x == c) {
            Some(k) => {
                sums[k].0 += r;
                sums[k].1 += 1;
            }
            None => {
                centers.push(c.clone());
                sums.push((*r, 1));
            }
        }
    }
    let targets: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(MetricError::Invalid(format!("bandwidth must be positive, got {h}"))),
        None => median_heuristic(&centers),
    };
    let mean = if centers.len() > 1 { targets.iter().sum::<f64>() / targets.len() as f64 } else { 0.0 };
    let n = centers.len();
    let mut k = Array2::from_shape_fn((n, n), |(i, j)| rbf(&centers[i], &centers[j], h));
    for i in 0..n {
        k[[i, i]] += ridge;
    }
    let y: Vec<f64> = targets.iter().map(|t| t - mean).collect();
    let coef = cholesky_solve(k, &y)?;
    Ok(RewardModel { centers, coef, mean, bandwidth: h })
}

/// Solves `A x = y` for symmetric positive definite `A`.
fn cholesky_solve(mut a: Array2<f64>, y: &[f64]) -> Result<Vec<f64>, MetricError> {
    let n = y.len();
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if !(diag > 0.0 && diag.is_finite()) {
            return Err(MetricError::Singular { row: j, n, pivot: diag });
        }
        let l = diag.sqrt();
        a[[j, j]] = l;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / l;
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[[i, k]] * z[k]).sum();
        z[i] = (y[i] - s) / a[[i, i]];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[[k, i]] * x[k]).sum();
        x[i] = (z[i] - s) / a[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l2_examples() {
        let d = l2_surrogate(2);
        assert_eq!(d.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(d.distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(d.distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn reward_gap_examples() {
        let j = |c: &[f64]| if c[0] < 0.5 { -10.0 } else { -4.0 };
        let d = reward_gap_surrogate(j);
        assert_eq!(d.distance(&[0.0], &[1.0]).unwrap(), 6.0);
        let bad = reward_gap_surrogate(|_: &[f64]| f64::NAN);
        assert!(bad.distance(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn single_sample_shrinkage() {
        let ridge = 1e-3;
        let m = fit_reward_model(&[(vec![1.0, 2.0], -7.0)], None, ridge).unwrap();
        let err = (m.predict(&[1.0, 2.0]) + 7.0).abs();
        assert!(err <= ridge / (1.0 + ridge) * 7.0 + 1e-15);
    }

    #[test]
    fn duplicates_merge() {
        let base = vec![(vec![0.0], 1.0), (vec![1.0], 3.0), (vec![2.5], -1.0)];
        let mut dup = base.clone();
        dup.push((vec![1.0], 3.0));
        let a = fit_reward_model(&base, None, 1e-6).unwrap();
        let b = fit_reward_model(&dup, None, 1e-6).unwrap();
        for x in [-1.0, 0.3, 1.7, 4.0] {
            assert!((a.predict(&[x]) - b.predict(&[x])).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_a_quadratic() {
        let f = |c: &[f64]| -(c[0] * c[0] + 0.5 * c[1] * c[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut draw = || vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let train: Vec<(Vec<f64>, f64)> = (0..20).map(|_| draw()).map(|c| { let y = f(&c); (c, y) }).collect();
        let test: Vec<Vec<f64>> = (0..50).map(|_| draw()).collect();
        let m = fit_reward_model(&train, None, 1e-6).unwrap();
        let rmse = (test.iter().map(|c| (m.predict(c) - f(c)).powi(2)).sum::<f64>() / test.len() as f64).sqrt();
        let ys: Vec<f64> = train.iter().map(|s| s.1).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
        assert!(rmse < sd, "rmse {rmse} vs sd {sd}");
    }
}

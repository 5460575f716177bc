use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("invalid probability {value} at ({row}, {col})")]
    Probability { row: usize, col: usize, value: f64 },
    #[error("action {action} out of range for {n_actions} actions")]
    Action { action: usize, n_actions: usize },
    #[error("empty policy")]
    Empty,
}

/// Per-state categorical distribution over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    pub fn new(probs: Array2<f64>) -> Result<Self, PolicyError> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(PolicyError::Empty);
        }
        for (row, r) in probs.rows().into_iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(PolicyError::Probability { row, col, value });
                }
            }
            let sum = r.sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(PolicyError::RowSum { row, sum });
            }
        }
        Ok(Self { probs })
    }

    /// One-hot policy taking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self, PolicyError> {
        if actions.is_empty() || n_actions == 0 {
            return Err(PolicyError::Empty);
        }
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(PolicyError::Action { action: a, n_actions });
            }
            probs[[s, a]] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self, PolicyError> {
        if n_states == 0 || n_actions == 0 {
            return Err(PolicyError::Empty);
        }
        Ok(Self { probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64) })
    }

    /// Stochastic policy with independent uniform(0, 1] weights per entry,
    /// normalized per state.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Result<Self, PolicyError> {
        if n_states == 0 || n_actions == 0 {
            return Err(PolicyError::Empty);
        }
        let mut probs = Array2::from_shape_fn((n_states, n_actions), |_| 1.0 - rng.random::<f64>());
        for mut row in probs.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        Ok(Self { probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[[state, action]]
    }

    /// The action of a one-hot row.
    pub fn action(&self, state: usize) -> Option<usize> {
        let row = self.probs.row(state);
        let mut hit = None;
        for (a, &p) in row.iter().enumerate() {
            if p == 1.0 {
                hit = Some(a);
            } else if p != 0.0 {
                return None;
            }
        }
        hit
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states()).all(|s| self.action(s).is_some())
    }

    /// Samples an action; one-hot rows consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        if let Some(a) = self.action(state) {
            return a;
        }
        let u: f64 = rng.random();
        let row = self.probs.row(state);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rows_must_be_distributions() {
        let bad = Array2::from_shape_vec((1, 2), vec![0.5, 0.6]).unwrap();
        assert!(matches!(Policy::new(bad), Err(PolicyError::RowSum { row: 0, .. })));
        let neg = Array2::from_shape_vec((1, 2), vec![1.5, -0.5]).unwrap();
        assert!(matches!(Policy::new(neg), Err(PolicyError::Probability { .. })));
    }

    #[test]
    fn one_hot_rows() {
        let p = Policy::deterministic(&[2, 0], 3).unwrap();
        assert_eq!(p.action(0), Some(2));
        assert!(p.is_deterministic());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample(1, &mut rng), 0);
        assert!(Policy::deterministic(&[3], 3).is_err());
    }

    #[test]
    fn random_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Policy::random(10, 4, &mut rng).unwrap();
        for row in p.probs().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x > 0.0));
        }
        assert!(!p.is_deterministic());
    }
}

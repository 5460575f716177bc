use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CurriculumError, CurriculumObserver};
use crate::envs::EpisodicEnv;
use crate::learner::{evaluate_greedy, LearnError, QTable};
use crate::ot::TaskDistribution;

/// Rolling-mean window for threshold detection.
pub const ROLLING_WINDOW: usize = 10;

/// One evaluation of the greedy policy on the target distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Trailing mean over up to `window` points; the first points average over
/// what is available.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Step count of the first curve point whose rolling mean return reaches
/// `threshold`; `None` if none does. No interpolation between points.
pub fn time_to_threshold(curve: &[CurvePoint], threshold: f64, window: usize) -> Option<u64> {
    let returns: Vec<f64> = curve.iter().map(|p| p.mean_return).collect();
    rolling_mean(&returns, window).iter().position(|&r| r >= threshold).map(|i| curve[i].env_steps)
}

/// Evaluates the greedy policy on a target distribution every `interval`
/// training steps with its own random stream.
pub struct TargetEvaluator<'a, E: EpisodicEnv> {
    env: &'a E,
    target: TaskDistribution,
    interval: u64,
    episodes: usize,
    max_steps: usize,
    rng: ChaCha8Rng,
    curve: Vec<CurvePoint>,
    error: Option<LearnError>,
}

impl<'a, E: EpisodicEnv> TargetEvaluator<'a, E> {
    pub fn new(
        env: &'a E,
        target: TaskDistribution,
        interval: u64,
        episodes: usize,
        max_steps: usize,
        seed: u64,
    ) -> Result<Self, CurriculumError> {
        if interval == 0 || episodes == 0 {
            return Err(CurriculumError::Config("evaluation interval and episodes must be positive".into()));
        }
        Ok(Self {
            env,
            target,
            interval,
            episodes,
            max_steps,
            rng: ChaCha8Rng::seed_from_u64(seed),
            curve: Vec::new(),
            error: None,
        })
    }

    pub fn evaluate(&mut self, q: &QTable) -> Result<CurvePoint, LearnError> {
        let stats = evaluate_greedy(self.env, q, &self.target, self.episodes, self.max_steps, &mut self.rng)?;
        Ok(CurvePoint { env_steps: 0, mean_return: stats.mean, std_return: stats.std })
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    /// The recorded curve, or the first evaluation error.
    pub fn finish(self) -> Result<Vec<CurvePoint>, CurriculumError> {
        match self.error {
            Some(e) => Err(e.into()),
            None => Ok(self.curve),
        }
    }
}

impl<E: EpisodicEnv> CurriculumObserver for TargetEvaluator<'_, E> {
    fn on_step(&mut self, env_steps: u64, q: &QTable) {
        if self.error.is_some() || env_steps % self.interval != 0 {
            return;
        }
        match self.evaluate(q) {
            Ok(p) => self.curve.push(CurvePoint { env_steps, ..p }),
            Err(e) => self.error = Some(e),
        }
    }

    fn on_stage_end(&mut self, q: &QTable) -> Result<Option<f64>, CurriculumError> {
        if let Some(e) = &self.error {
            return Err(e.clone().into());
        }
        Ok(Some(self.evaluate(q)?.mean_return))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(returns: &[f64]) -> Vec<CurvePoint> {
        returns
            .iter()
            .enumerate()
            .map(|(i, &r)| CurvePoint { env_steps: 1000 * (i as u64 + 1), mean_return: r, std_return: 0.0 })
            .collect()
    }

    #[test]
    fn starts_above() {
        assert_eq!(time_to_threshold(&curve(&[-3.0, -2.0]), -15.0, 10), Some(1000));
    }

    #[test]
    fn first_sample_at_or_above_without_interpolation() {
        let c = curve(&[-40.0, -16.0, -15.0, -14.0]);
        assert_eq!(time_to_threshold(&c, -15.0, 1), Some(3000));
    }

    #[test]
    fn never_reached() {
        assert_eq!(time_to_threshold(&curve(&[-88.0; 20]), -15.0, 10), None);
        assert_eq!(time_to_threshold(&[], -15.0, 10), None);
    }

    #[test]
    fn rolling_window_delays_detection() {
        let mut r = vec![-88.0; 5];
        r.extend([-10.0; 20]);
        // A single -88 in the window keeps the mean below -15.
        assert_eq!(time_to_threshold(&curve(&r), -15.0, 10), Some(15_000));
        assert_eq!(rolling_mean(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}

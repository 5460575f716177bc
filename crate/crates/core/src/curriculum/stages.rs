use super::CurriculumError;
use crate::envs::EpisodicEnv;
use crate::learner::{q_learning_round, NoObserver, QLearner, QTable, TrainingObserver};
use crate::ot::{Particles, TaskDistribution};

/// Task metric used to build the interpolation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricChoice {
    ExactBisim,
    PiBisim,
    L2,
    RewardGap,
    Embedded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurriculumConfig {
    pub delta_alpha: f64,
    /// A stage is cleared once a round's mean training return exceeds this.
    pub reward_threshold: f64,
    /// Largest stage index `K`; stages run for `k = 0..=K`.
    pub max_stages: usize,
    pub max_rounds_per_stage: usize,
    pub metric_choice: MetricChoice,
    /// After the curriculum ends, keep training on the last stage
    /// distribution until the learner's step budget is spent.
    pub train_to_budget: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            delta_alpha: 0.1,
            reward_threshold: -15.0,
            max_stages: 20,
            max_rounds_per_stage: 200,
            metric_choice: MetricChoice::ExactBisim,
            train_to_budget: false,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let d = self.delta_alpha;
        if !(d > 0.0 && d <= 1.0) {
            return Err(CurriculumError::Config(format!("delta_alpha must lie in (0, 1], got {d}")));
        }
        if !self.reward_threshold.is_finite() {
            return Err(CurriculumError::Config("reward_threshold must be finite".into()));
        }
        if self.max_rounds_per_stage == 0 {
            return Err(CurriculumError::Config("max_rounds_per_stage must be positive".into()));
        }
        if self.final_stage() > self.max_stages {
            return Err(CurriculumError::Config(format!(
                "max_stages {} cannot reach alpha = 1 with delta_alpha {d} (needs {})",
                self.max_stages,
                self.final_stage()
            )));
        }
        Ok(())
    }

    /// First stage index whose alpha is 1.
    pub fn final_stage(&self) -> usize {
        let k = (1.0 / self.delta_alpha).ceil() as usize;
        if k > 0 && (k - 1) as f64 * self.delta_alpha >= 1.0 - 1e-12 {
            k - 1
        } else {
            k
        }
    }

    /// `min(k * delta_alpha, 1)`, snapped to exactly 1 from the final stage on.
    pub fn alpha(&self, k: usize) -> f64 {
        if k >= self.final_stage() {
            1.0
        } else {
            (k as f64 * self.delta_alpha).min(1.0)
        }
    }
}

/// Extra record for stages produced through a learned embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStage {
    /// Reward samples the return model was fitted on.
    pub reward_samples: usize,
    /// The embedding could not be trained; the stage used raw-space L2.
    pub fallback: bool,
    /// Rank correlation of the trained embedding on its training pairs.
    pub correlation: Option<f64>,
    /// Decoder output before it was moved onto valid contexts.
    pub decoded: Option<Particles>,
    /// Decoded particles that had to be moved.
    pub projected: usize,
}

/// Stage distribution chosen for one curriculum stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    pub distribution: TaskDistribution,
    pub embedding: Option<EmbeddingStage>,
}

impl From<TaskDistribution> for StagePlan {
    fn from(distribution: TaskDistribution) -> Self {
        Self { distribution, embedding: None }
    }
}

/// Source of per-stage training distributions.
pub trait StageSchedule<C: ?Sized> {
    fn plan(&mut self, k: usize, alpha: f64) -> Result<StagePlan, CurriculumError>;
    /// Every completed training episode, with its context and return.
    fn on_episode(&mut self, _context: &C, _ret: f64) {}
}

/// Hooks for evaluation during a curriculum run.
pub trait CurriculumObserver {
    fn on_step(&mut self, _env_steps: u64, _q: &QTable) {}
    /// Target evaluation recorded in the stage summary.
    fn on_stage_end(&mut self, _q: &QTable) -> Result<Option<f64>, CurriculumError> {
        Ok(None)
    }
}

impl CurriculumObserver for NoObserver {}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub k: usize,
    pub alpha: f64,
    pub distribution: TaskDistribution,
    pub env_steps: u64,
    pub rounds: usize,
    /// Mean training return of the last round with a completed episode.
    pub final_return: Option<f64>,
    /// The stage ended because the threshold was exceeded.
    pub cleared: bool,
    pub eval_return: Option<f64>,
    pub embedding: Option<EmbeddingStage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumTrace {
    pub stages: Vec<StageRecord>,
    /// Training after the curriculum ended (see `train_to_budget`).
    pub post_env_steps: u64,
    pub post_rounds: usize,
    pub total_env_steps: u64,
    /// The alpha = 1 stage cleared the threshold.
    pub completed: bool,
    pub budget_exhausted: bool,
}

impl CurriculumTrace {
    pub fn alphas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.alpha).collect()
    }

    /// Recomputed step total equals the recorded one.
    pub fn accounting_consistent(&self) -> bool {
        self.stages.iter().map(|s| s.env_steps).sum::<u64>() + self.post_env_steps == self.total_env_steps
    }
}

struct Bridge<'a, S: ?Sized, O: ?Sized> {
    schedule: &'a mut S,
    observer: &'a mut O,
}

impl<C: ?Sized, S: StageSchedule<C> + ?Sized, O: CurriculumObserver + ?Sized> TrainingObserver<C> for Bridge<'_, S, O> {
    fn on_step(&mut self, env_steps: u64, q: &QTable) {
        self.observer.on_step(env_steps, q);
    }

    fn on_episode(&mut self, context: &C, ret: f64) {
        self.schedule.on_episode(context, ret);
    }
}

/// Runs stages `k = 0..=K` at `alpha = min(k * delta_alpha, 1)`, training on
/// each stage distribution until a round's mean return exceeds the
/// threshold or the round cap is hit, and stops once the alpha = 1 stage
/// clears or the learner's budget runs out. The Q-table carries over
/// between stages.
pub fn run_curriculum<E, R, S, O>(
    env: &E,
    cfg: &CurriculumConfig,
    learner: &mut QLearner,
    schedule: &mut S,
    rng: &mut R,
    observer: &mut O,
) -> Result<CurriculumTrace, CurriculumError>
where
    E: EpisodicEnv,
    R: rand::Rng + ?Sized,
    S: StageSchedule<E::Context> + ?Sized,
    O: CurriculumObserver + ?Sized,
{
    cfg.validate()?;
    if cfg.train_to_budget && learner.budget().is_none() {
        return Err(CurriculumError::Config("train_to_budget needs a learner step budget".into()));
    }
    let start_steps = learner.env_steps();
    let mut stages = Vec::new();
    let mut completed = false;
    let mut exhausted = false;

    for k in 0..=cfg.max_stages {
        if !learner.budget_left() {
            exhausted = true;
            break;
        }
        let alpha = cfg.alpha(k);
        let plan = schedule.plan(k, alpha)?;
        learner.begin_stage();
        let before = learner.env_steps();
        let mut rounds = 0;
        let mut final_return = None;
        let mut cleared = false;
        while rounds < cfg.max_rounds_per_stage {
            let out = {
                let mut bridge = Bridge { schedule: &mut *schedule, observer: &mut *observer };
                q_learning_round(env, &plan.distribution, learner, rng, &mut bridge)?
            };
            rounds += 1;
            if out.episodes == 0 && !out.budget_exhausted {
                return Err(CurriculumError::Config("episodes_per_round must be positive".into()));
            }
            if let Some(g) = out.mean_return {
                final_return = Some(g);
                if g > cfg.reward_threshold {
                    cleared = true;
                    break;
                }
            }
            if out.budget_exhausted {
                exhausted = true;
                break;
            }
        }
        let eval_return = observer.on_stage_end(learner.q())?;
        stages.push(StageRecord {
            k,
            alpha,
            distribution: plan.distribution,
            env_steps: learner.env_steps() - before,
            rounds,
            final_return,
            cleared,
            eval_return,
            embedding: plan.embedding,
        });
        if exhausted {
            break;
        }
        if alpha == 1.0 && cleared {
            completed = true;
            break;
        }
    }

    let mut post_env_steps = 0;
    let mut post_rounds = 0;
    if cfg.train_to_budget && !exhausted {
        if let Some(last) = stages.last() {
            let dist = last.distribution.clone();
            let before = learner.env_steps();
            loop {
                let out = {
                    let mut bridge = Bridge { schedule: &mut *schedule, observer: &mut *observer };
                    q_learning_round(env, &dist, learner, rng, &mut bridge)?
                };
                post_rounds += 1;
                if out.budget_exhausted {
                    break;
                }
                if out.episodes == 0 {
                    return Err(CurriculumError::Config("episodes_per_round must be positive".into()));
                }
            }
            post_env_steps = learner.env_steps() - before;
            exhausted = true;
        }
    }

    Ok(CurriculumTrace {
        stages,
        post_env_steps,
        post_rounds,
        total_env_steps: learner.env_steps() - start_steps,
        completed,
        budget_exhausted: exhausted,
    })
}

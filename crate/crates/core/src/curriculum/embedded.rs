use std::collections::VecDeque;

use rand::Rng;

use super::{
    run_curriculum, CurriculumConfig, CurriculumError, CurriculumObserver, CurriculumTrace, EmbeddingStage, StagePlan,
    StageSchedule,
};
use crate::embed::{latent_interpolation, train_embedding, Architecture, EmbedTrainConfig, TrainedEmbedding};
use crate::envs::{ContextSpace, EpisodicEnv};
use crate::learner::{greedy_policy, QLearner};
use crate::metrics::fit_reward_model;
use crate::ot::{barycenter_free_support, FnDistance, Particles, SquaredL2};
use crate::policy::Policy;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedConfig {
    pub arch: Architecture,
    pub embed: EmbedTrainConfig,
    /// Most recent `(context, return)` samples the return model is fitted on.
    pub recent_samples: usize,
    pub ridge: f64,
    /// Kernel bandwidth in unit-box coordinates; `None` uses the median
    /// pairwise distance.
    pub bandwidth: Option<f64>,
}

impl EmbeddedConfig {
    pub fn standard(context_dim: usize) -> Self {
        Self {
            arch: Architecture::standard(context_dim),
            embed: EmbedTrainConfig::default(),
            recent_samples: 500,
            ridge: 1e-2,
            bandwidth: None,
        }
    }
}

/// Stages chosen by interpolating in a learned latent space.
///
/// Stage 0 is the source. Every later stage fits a return model `J` on the
/// recent training episodes, trains an embedding whose squared latent
/// distances reproduce `|J(a) - J(b)| / span` on uniformly drawn valid
/// contexts, interpolates the encoded current source and target at `alpha`,
/// decodes, and moves invalid decoded particles onto valid contexts. The
/// result becomes the next source. Contexts enter the networks rescaled to
/// `[-1, 1]` per coordinate. When the return model or the embedding cannot
/// be built the stage falls back to plain interpolation in context space.
pub struct EmbeddedSchedule<'a, S: ContextSpace> {
    space: &'a S,
    source: Particles,
    nu: Particles,
    cfg: EmbeddedConfig,
    recent: VecDeque<(Vec<f64>, f64)>,
    seen: usize,
    embeddings: Vec<(usize, TrainedEmbedding)>,
}

impl<'a, S: ContextSpace> EmbeddedSchedule<'a, S> {
    pub fn new(space: &'a S, mu: &Particles, nu: &Particles, cfg: EmbeddedConfig) -> Result<Self, CurriculumError> {
        let dim = space.dim();
        for (name, d) in [("source", mu.dim()), ("target", nu.dim()), ("encoder input", cfg.arch.context_dim)] {
            if d != dim {
                return Err(CurriculumError::Config(format!("{name} dimension {d} differs from context dimension {dim}")));
            }
        }
        if cfg.recent_samples == 0 {
            return Err(CurriculumError::Config("recent_samples must be positive".into()));
        }
        cfg.embed.validate()?;
        Ok(Self {
            space,
            source: mu.clone(),
            nu: nu.clone(),
            cfg,
            recent: VecDeque::new(),
            seen: 0,
            embeddings: Vec::new(),
        })
    }

    /// Training episodes observed so far.
    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    /// Trained embeddings by stage index.
    pub fn embeddings(&self) -> &[(usize, TrainedEmbedding)] {
        &self.embeddings
    }

    fn box_to_unit(&self, c: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.space.bounds();
        c.iter().enumerate().map(|(k, v)| 2.0 * (v - lo[k]) / (hi[k] - lo[k]) - 1.0).collect()
    }

    fn unit_to_box(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.space.bounds();
        u.iter().enumerate().map(|(k, v)| lo[k] + 0.5 * (v + 1.0) * (hi[k] - lo[k])).collect()
    }

    fn embedded_step(&self, k: usize, alpha: f64) -> Option<(TrainedEmbedding, Particles)> {
        let samples: Vec<(Vec<f64>, f64)> = self.recent.iter().map(|(c, r)| (self.box_to_unit(c), *r)).collect();
        let model = fit_reward_model(&samples, self.cfg.bandwidth, self.cfg.ridge).ok()?;
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, r)| (a.min(*r), b.max(*r)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let metric = FnDistance(move |a: &[f64], b: &[f64]| (model.predict(a) - model.predict(b)).abs() / span);
        let cfg = EmbedTrainConfig { seed: self.cfg.embed.seed.wrapping_add(k as u64), ..self.cfg.embed };
        let space = self.space;
        let trained = train_embedding(|r| self.box_to_unit(&space.sample_valid(r)), &metric, &self.cfg.arch, &cfg).ok()?;
        let src = self.source.map_points(|c| self.box_to_unit(c)).ok()?;
        let tgt = self.nu.map_points(|c| self.box_to_unit(c)).ok()?;
        let decoded = latent_interpolation(&trained.params, &src, &tgt, alpha).ok()?;
        let decoded = decoded.map_points(|u| self.unit_to_box(u)).ok()?;
        Some((trained, decoded))
    }
}

impl<S: ContextSpace, C: AsRef<[f64]> + ?Sized> StageSchedule<C> for EmbeddedSchedule<'_, S> {
    fn plan(&mut self, k: usize, alpha: f64) -> Result<StagePlan, CurriculumError> {
        if k == 0 {
            return Ok(self.source.clone().into());
        }
        let reward_samples = self.recent.len();
        let (decoded, fallback, correlation) = match self.embedded_step(k, alpha) {
            Some((trained, decoded)) => {
                let r = trained.correlation;
                self.embeddings.push((k, trained));
                (decoded, false, Some(r))
            }
            None => (barycenter_free_support(&self.source, &self.nu, alpha, &SquaredL2)?, true, None),
        };
        let projected = decoded.points().iter().filter(|p| !self.space.is_valid(p)).count();
        let rho = decoded.map_points(|p| self.space.project(p))?;
        self.source = rho.clone();
        Ok(StagePlan {
            distribution: rho.into(),
            embedding: Some(EmbeddingStage {
                reward_samples,
                fallback,
                correlation,
                decoded: Some(decoded),
                projected,
            }),
        })
    }

    fn on_episode(&mut self, context: &C, ret: f64) {
        self.recent.push_back((context.as_ref().to_vec(), ret));
        if self.recent.len() > self.cfg.recent_samples {
            self.recent.pop_front();
        }
        self.seen += 1;
    }
}

/// Embedding-assisted curriculum from `mu` to `nu`; returns the greedy
/// policy of the final Q-table with the trace.
#[allow(clippy::too_many_arguments)]
pub fn gradient_with_embedding<E, R, O>(
    env: &E,
    mu: &Particles,
    nu: &Particles,
    cfg: &CurriculumConfig,
    learner: &mut QLearner,
    embed_cfg: &EmbeddedConfig,
    rng: &mut R,
    observer: &mut O,
) -> Result<(Policy, CurriculumTrace), CurriculumError>
where
    E: EpisodicEnv + ContextSpace,
    E::Context: AsRef<[f64]>,
    R: Rng + ?Sized,
    O: CurriculumObserver + ?Sized,
{
    let mut schedule = EmbeddedSchedule::new(env, mu, nu, embed_cfg.clone())?;
    let trace = run_curriculum(env, cfg, learner, &mut schedule, rng, observer)?;
    Ok((greedy_policy(learner.q()), trace))
}

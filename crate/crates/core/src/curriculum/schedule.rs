use rand::Rng;

use super::{run_curriculum, CurriculumConfig, CurriculumError, CurriculumObserver, CurriculumTrace, StagePlan, StageSchedule};
use crate::envs::EpisodicEnv;
use crate::learner::{greedy_policy, QLearner};
use crate::ot::{
    barycenter_fixed_support, barycenter_free_support, build_index_cost, Categorical, CostMatrix, Ground, OtError,
    Particles, SinkhornConfig, Squared, TaskDistribution,
};
use crate::policy::Policy;

/// Stages on the displacement-interpolation path between `mu` and `nu` under
/// the squared ground metric: the debiased fixed-support barycenter for
/// categorical distributions, McCann interpolation for particle clouds.
pub struct GeodesicSchedule<'a> {
    mu: TaskDistribution,
    nu: TaskDistribution,
    ground: Ground<'a>,
    cost: Option<CostMatrix>,
    sinkhorn: SinkhornConfig,
    cache: Vec<(f64, TaskDistribution)>,
}

impl<'a> GeodesicSchedule<'a> {
    pub fn new(
        mu: &TaskDistribution,
        nu: &TaskDistribution,
        ground: Ground<'a>,
        sinkhorn: SinkhornConfig,
    ) -> Result<Self, CurriculumError> {
        let cost = match (mu, nu, ground) {
            (TaskDistribution::Categorical(a), TaskDistribution::Categorical(b), Ground::Indexed(d)) => {
                if a.len() != b.len() {
                    return Err(OtError::DimensionMismatch { expected: a.len(), got: b.len() }.into());
                }
                let idx: Vec<usize> = (0..a.len()).collect();
                Some(build_index_cost(&idx, &idx, &Squared(d))?)
            }
            (TaskDistribution::Particles(a), TaskDistribution::Particles(b), Ground::Points(_)) => {
                if a.dim() != b.dim() {
                    return Err(OtError::DimensionMismatch { expected: a.dim(), got: b.dim() }.into());
                }
                None
            }
            _ => {
                return Err(OtError::MixedKinds(format!(
                    "{} and {} distributions with a mismatched ground metric",
                    mu.kind(),
                    nu.kind()
                ))
                .into())
            }
        };
        Ok(Self { mu: mu.clone(), nu: nu.clone(), ground, cost, sinkhorn, cache: Vec::new() })
    }

    /// The interpolant at `alpha`.
    pub fn at(&mut self, alpha: f64) -> Result<TaskDistribution, CurriculumError> {
        if let Some((_, d)) = self.cache.iter().find(|(a, _)| *a == alpha) {
            return Ok(d.clone());
        }
        let d = match (&self.mu, &self.nu, self.ground) {
            (TaskDistribution::Categorical(a), TaskDistribution::Categorical(b), _) => {
                let cost = self.cost.as_ref().expect("categorical schedules carry a cost matrix");
                TaskDistribution::from(barycenter_fixed_support(a, b, alpha, cost, &self.sinkhorn)?.barycenter)
            }
            (TaskDistribution::Particles(a), TaskDistribution::Particles(b), Ground::Points(d)) => {
                TaskDistribution::from(barycenter_free_support(a, b, alpha, &Squared(d))?)
            }
            _ => unreachable!("kinds checked at construction"),
        };
        self.cache.push((alpha, d.clone()));
        Ok(d)
    }
}

impl<C: ?Sized> StageSchedule<C> for GeodesicSchedule<'_> {
    fn plan(&mut self, _k: usize, alpha: f64) -> Result<StagePlan, CurriculumError> {
        Ok(self.at(alpha)?.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    /// Always the target.
    NoCurriculum,
    /// Always the uniform distribution over the context space.
    DomainRandomization,
    /// The mixture `(1 - alpha) mu + alpha nu`.
    Linear,
}

/// Training distribution of a reference baseline at `alpha`; `uniform` is
/// the uniform distribution over the context space.
pub fn baseline_sampler(
    kind: BaselineKind,
    mu: &TaskDistribution,
    nu: &TaskDistribution,
    alpha: f64,
    uniform: &TaskDistribution,
) -> Result<TaskDistribution, CurriculumError> {
    Ok(match kind {
        BaselineKind::NoCurriculum => nu.clone(),
        BaselineKind::DomainRandomization => uniform.clone(),
        BaselineKind::Linear => match (mu, nu) {
            (TaskDistribution::Categorical(a), TaskDistribution::Categorical(b)) => a.mix(b, alpha)?.into(),
            (TaskDistribution::Particles(a), TaskDistribution::Particles(b)) => a.union_mix(b, alpha)?.into(),
            _ => return Err(OtError::MixedKinds(format!("{} vs {}", mu.kind(), nu.kind())).into()),
        },
    })
}

pub struct BaselineSchedule {
    pub kind: BaselineKind,
    pub mu: TaskDistribution,
    pub nu: TaskDistribution,
    pub uniform: TaskDistribution,
}

impl<C: ?Sized> StageSchedule<C> for BaselineSchedule {
    fn plan(&mut self, _k: usize, alpha: f64) -> Result<StagePlan, CurriculumError> {
        Ok(baseline_sampler(self.kind, &self.mu, &self.nu, alpha, &self.uniform)?.into())
    }
}

/// Curriculum along the geodesic from `mu` to `nu` under `ground`; returns
/// the greedy policy of the final Q-table with the trace.
#[allow(clippy::too_many_arguments)]
pub fn gradient_run<E, R, O>(
    env: &E,
    mu: &TaskDistribution,
    nu: &TaskDistribution,
    cfg: &CurriculumConfig,
    learner: &mut QLearner,
    ground: Ground<'_>,
    rng: &mut R,
    observer: &mut O,
) -> Result<(Policy, CurriculumTrace), CurriculumError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
    O: CurriculumObserver + ?Sized,
{
    let mut schedule = GeodesicSchedule::new(mu, nu, ground, SinkhornConfig::barycenter())?;
    let trace = run_curriculum(env, cfg, learner, &mut schedule, rng, observer)?;
    Ok((greedy_policy(learner.q()), trace))
}

impl From<Categorical> for StagePlan {
    fn from(c: Categorical) -> Self {
        TaskDistribution::from(c).into()
    }
}

impl From<Particles> for StagePlan {
    fn from(p: Particles) -> Self {
        TaskDistribution::from(p).into()
    }
}

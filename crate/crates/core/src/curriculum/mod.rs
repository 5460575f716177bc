//! Staged training along an interpolation path from a source to a target task
//! distribution, the reference baselines, learning-curve bookkeeping and the
//! transfer-gap audit.

mod audit;
mod curve;
mod embedded;
mod schedule;
mod stages;

use thiserror::Error;

use crate::embed::EmbedError;
use crate::envs::EnvError;
use crate::learner::LearnError;
use crate::metrics::MetricError;
use crate::ot::OtError;

pub use audit::{restricted_optimal_policy, transfer_gap_audit, Audit, AuditRow, AUDIT_SUPPORT_FLOOR};
pub use curve::{rolling_mean, time_to_threshold, CurvePoint, TargetEvaluator, ROLLING_WINDOW};
pub use embedded::{gradient_with_embedding, EmbeddedConfig, EmbeddedSchedule};
pub use schedule::{baseline_sampler, gradient_run, BaselineKind, BaselineSchedule, GeodesicSchedule};
pub use stages::{
    run_curriculum, CurriculumConfig, CurriculumObserver, CurriculumTrace, EmbeddingStage, MetricChoice,
    StagePlan, StageRecord, StageSchedule,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("invalid curriculum configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

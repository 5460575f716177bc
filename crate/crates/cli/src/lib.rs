//! Experiment runner for geodesic curricula: JSON configs, per-seed runs on a
//! worker pool, aggregate tables, the transfer-gap audit and small
//! inspection commands.

pub mod commands;
pub mod config;
pub mod run;
pub mod world;

use thiserror::Error;

use geocurr_core::curriculum::CurriculumError;
use geocurr_core::envs::EnvError;
use geocurr_core::io::IoError;
use geocurr_core::learner::LearnError;
use geocurr_core::metrics::MetricError;
use geocurr_core::ot::OtError;

pub use config::{ExperimentConfig, Method, MetricSpec, SCHEMA_VERSION};
pub use run::{run_experiment, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{failed} of {total} runs failed")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Artifact(#[from] IoError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl CliError {
    /// 1 for configuration and fatal errors, 2 when only some runs failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Partial { .. } => 2,
            _ => 1,
        }
    }
}

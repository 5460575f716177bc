//! Distances between contexts: the on-policy bisimulation fixed point over a
//! tabular model, its deterministic special case, and cheap surrogates for
//! continuous contexts.

mod bisim;
mod surrogate;
mod table;

use thiserror::Error;

use crate::envs::EnvError;
use crate::learner::LearnError;
use crate::ot::OtError;
use crate::policy::PolicyError;

pub use bisim::{
    bisim_operator, exact_metric_deterministic, pi_contextual_distance, value_gap_violation, BisimResult, ExactMetric,
    BISIM_LP_SUPPORT, DIAGONAL_OFFSET,
};
pub use surrogate::{fit_reward_model, l2_surrogate, reward_gap_surrogate, L2Distance, RewardGap, RewardModel};
pub use table::DistanceTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("distance table is {table}x{table} but the model has {states} states")]
    Domain { table: usize, states: usize },
    #[error("invalid distance table: {0}")]
    Table(String),
    #[error("stochastic transition at state {state}; use the general fixed-point iteration instead")]
    Stochastic { state: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("kernel system is singular: pivot {pivot} at row {row} of {n}")]
    Singular { row: usize, n: usize, pivot: f64 },
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

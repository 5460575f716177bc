//! Contextual MDPs: a generic tabular representation, a grid maze whose
//! context is the start cell, and a continuous goal field whose context is
//! the goal position.

mod goal_field;
mod maze;
mod tabular;

use rand::Rng;
use thiserror::Error;

use crate::ot::TaskDistribution;

pub use goal_field::{goal_field_episode, EpisodeOutcome, FieldObservation, GoalField, Rect, FIELD_ACTIONS};
pub use maze::{maze_from_layout, Cell, Maze, MazeLayout, MazeParams, MAZE_ACTIONS};
pub use tabular::{enumerate_contexts, step, TabularCMDP, TabularBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("{what} index {index} out of range (size {size})")]
    OutOfRange { what: &'static str, index: usize, size: usize },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("free cell at row {row}, col {col} cannot reach the goal")]
    Unreachable { row: usize, col: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid context: {0}")]
    Context(String),
}

/// One environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: f64,
    /// The episode ends on entering `next`.
    pub terminal: bool,
}

/// Episodic interface shared by the tabular learner and the curricula.
///
/// States are indexed `0..n_states`; contexts are whatever the environment
/// draws from a [`TaskDistribution`].
pub trait EpisodicEnv: Sync {
    type Context: Clone + Send + Sync;

    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Discount used by value-based learners on this environment.
    fn gamma(&self) -> f64;
    /// Hard cap on the episode length imposed by the environment itself.
    fn horizon(&self) -> Option<usize> {
        None
    }
    fn sample_context<R: Rng + ?Sized>(&self, dist: &TaskDistribution, rng: &mut R) -> Result<Self::Context, EnvError>;
    fn reset<R: Rng + ?Sized>(&self, context: &Self::Context, rng: &mut R) -> Result<usize, EnvError>;
    /// Whether an episode in `context` is already over at `state`.
    fn is_done(&self, state: usize, context: &Self::Context) -> bool;
    fn transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        context: &Self::Context,
        rng: &mut R,
    ) -> Result<Transition, EnvError>;
}

/// A box of continuous contexts, some of which are invalid.
pub trait ContextSpace: Sync {
    fn dim(&self) -> usize;
    /// Lower and upper corner of the box.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn is_valid(&self, c: &[f64]) -> bool;
    /// Uniform draw from the valid contexts.
    fn sample_valid<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
    /// A valid context near `c`; valid contexts are returned unchanged.
    fn project(&self, c: &[f64]) -> Vec<f64>;
}

/// One row of a trajectory log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// Rolls out `policy` for one episode in `context`, capped at `max_steps`.
pub fn rollout<E, R, P>(
    env: &E,
    context: &E::Context,
    mut policy: P,
    max_steps: usize,
    rng: &mut R,
) -> Result<Vec<TrajectoryStep>, EnvError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
    P: FnMut(usize, &mut R) -> usize,
{
    let mut s = env.reset(context, rng)?;
    let mut out = Vec::new();
    if env.is_done(s, context) {
        return Ok(out);
    }
    for t in 0..max_steps {
        let a = policy(s, rng);
        let tr = env.transition(s, a, context, rng)?;
        out.push(TrajectoryStep { t, state: s, action: a, reward: tr.reward });
        if tr.terminal {
            break;
        }
        s = tr.next;
    }
    Ok(out)
}

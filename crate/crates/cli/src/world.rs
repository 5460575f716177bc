use std::fs::File;
use std::path::Path;

use geocurr_core::envs::{maze_from_layout, GoalField, Maze, MazeLayout, MazeParams, Rect};
use geocurr_core::learner::value_iteration;
use geocurr_core::metrics::{
    exact_metric_deterministic, pi_contextual_distance, DistanceTable, DIAGONAL_OFFSET,
};
use geocurr_core::ot::{Categorical, Particles, TaskDistribution};
use geocurr_core::policy::Policy;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DistSpec, EnvSpec, MetricSpec};
use crate::CliError;

/// Fixed-point tolerance for the bisimulation metrics and value iteration.
pub const METRIC_TOL: f64 = 1e-10;

pub enum World {
    Maze(Maze),
    Field(GoalField),
}

pub fn load_layout(path: &Path) -> Result<MazeLayout, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn rect(r: &[[f64; 2]; 2]) -> Result<Rect, CliError> {
    Rect::new(r[0], r[1]).map_err(|e| CliError::Config(format!("environment: {e}")))
}

impl World {
    pub fn build(spec: &EnvSpec) -> Result<Self, CliError> {
        match spec {
            EnvSpec::Maze { layout, gamma, step_reward, goal_reward } => {
                let params = MazeParams { gamma: *gamma, step_reward: *step_reward, goal_reward: *goal_reward, ..MazeParams::default() };
                let maze = maze_from_layout(&load_layout(layout)?, &params)
                    .map_err(|e| CliError::Config(format!("environment: {e}")))?;
                Ok(World::Maze(maze))
            }
            EnvSpec::GoalField { bounds, obstacles, goal_radius, max_steps, step_penalty, step_size, origin, gamma } => {
                let obstacles = obstacles.iter().map(rect).collect::<Result<Vec<_>, _>>()?;
                let field = GoalField::new(
                    rect(bounds)?,
                    *goal_radius,
                    *max_steps,
                    *step_penalty,
                    *step_size,
                    *origin,
                    obstacles,
                    *gamma,
                )
                .map_err(|e| CliError::Config(format!("environment: {e}")))?;
                Ok(World::Field(field))
            }
        }
    }

    pub fn default_max_steps(&self) -> usize {
        match self {
            World::Maze(m) => 4 * (m.layout().height() + m.layout().width()),
            World::Field(f) => f.max_steps(),
        }
    }

    /// Uniform distribution over the context space: every maze context, or
    /// every free lattice point of a goal field.
    pub fn uniform(&self) -> Result<TaskDistribution, CliError> {
        Ok(match self {
            World::Maze(m) => Categorical::uniform(m.context_states().len())?.into(),
            World::Field(f) => Particles::uniform(f.free_points().iter().map(|p| p.to_vec()).collect())?.into(),
        })
    }

    pub fn distribution(&self, spec: &DistSpec, field: &str) -> Result<TaskDistribution, CliError> {
        let bad = |msg: String| CliError::Config(format!("{field}: {msg}"));
        match (self, spec) {
            (World::Maze(m), DistSpec::Shells { min, max }) => {
                let d = m.context_goal_distances();
                let idx: Vec<usize> = (0..d.len()).filter(|&c| d[c] >= *min && d[c] <= *max).collect();
                if idx.is_empty() {
                    return Err(bad(format!("no context at goal distance {min}..={max}")));
                }
                Ok(Categorical::uniform_on(d.len(), &idx)?.into())
            }
            (World::Maze(m), DistSpec::Contexts { indices }) => {
                Categorical::uniform_on(m.context_states().len(), indices).map(Into::into).map_err(|e| bad(e.to_string()))
            }
            (World::Maze(m), DistSpec::Cells { cells }) => {
                let idx = cells
                    .iter()
                    .map(|[r, c]| m.context_at(*r, *c).ok_or_else(|| bad(format!("cell ({r}, {c}) is not a start cell"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Categorical::uniform_on(m.context_states().len(), &idx).map(Into::into).map_err(|e| bad(e.to_string()))
            }
            (World::Field(f), DistSpec::Box { min, max, particles, seed }) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut points = Vec::with_capacity(*particles);
                let mut tries = 0;
                while points.len() < *particles {
                    tries += 1;
                    if tries > 1000 * particles {
                        return Err(bad("box has no valid contexts".into()));
                    }
                    let p = vec![rng.random_range(min[0]..=max[0]), rng.random_range(min[1]..=max[1])];
                    if f.bounds().contains(&p) && !f.in_obstacle(&p) {
                        points.push(p);
                    }
                }
                Ok(Particles::uniform(points)?.into())
            }
            (_, DistSpec::File { path }) => {
                let file = File::open(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
                let d = geocurr_core::io::read_distribution(file).map_err(|e| bad(e.to_string()))?;
                self.check(&d).map_err(bad)?;
                Ok(d)
            }
            _ => Err(bad("distribution kind does not match the environment".into())),
        }
    }

    fn check(&self, d: &TaskDistribution) -> Result<(), String> {
        match (self, d) {
            (World::Maze(m), TaskDistribution::Categorical(c)) if c.len() == m.context_states().len() => Ok(()),
            (World::Field(_), TaskDistribution::Particles(p)) if p.dim() == 2 => Ok(()),
            _ => Err("distribution does not match the environment contexts".into()),
        }
    }
}

/// Context-by-context ground table on a maze, scaled to max 1 with a small
/// diagonal offset.
pub fn maze_ground_table(maze: &Maze, metric: MetricSpec) -> Result<DistanceTable, CliError> {
    let cmdp = maze.cmdp();
    let optimal = value_iteration(cmdp, METRIC_TOL)?;
    match metric {
        MetricSpec::ExactBisim => {
            let d = exact_metric_deterministic(cmdp, &optimal.policy, cmdp.gamma(), METRIC_TOL)?;
            Ok(d.contexts_normalized(cmdp)?)
        }
        MetricSpec::PiBisim => {
            let d = pi_contextual_distance(cmdp, &optimal.policy, cmdp.gamma(), METRIC_TOL)?;
            Ok(d.contexts(cmdp)?.with_offset_normalized(DIAGONAL_OFFSET))
        }
        MetricSpec::L2 => {
            let cells: Vec<(f64, f64)> = maze
                .context_states()
                .iter()
                .map(|&s| {
                    let (r, c) = maze.cell_of(s);
                    (r as f64, c as f64)
                })
                .collect();
            let n = cells.len();
            let v = Array2::from_shape_fn((n, n), |(i, j)| (cells[i].0 - cells[j].0).hypot(cells[i].1 - cells[j].1));
            Ok(DistanceTable::new(v)?.with_offset_normalized(DIAGONAL_OFFSET))
        }
        MetricSpec::RewardGap => {
            let v = &optimal.values;
            let starts = maze.context_states();
            let n = starts.len();
            let t = Array2::from_shape_fn((n, n), |(i, j)| (v[starts[i]] - v[starts[j]]).abs());
            Ok(DistanceTable::new(t)?.with_offset_normalized(DIAGONAL_OFFSET))
        }
    }
}

/// Exact metric over contexts without offset, scaled to max 1: the
/// transport ground distance of the transfer-gap audit.
pub fn audit_table(maze: &Maze) -> Result<DistanceTable, CliError> {
    let cmdp = maze.cmdp();
    let optimal = value_iteration(cmdp, METRIC_TOL)?;
    let d = exact_metric_deterministic(cmdp, &optimal.policy, cmdp.gamma(), METRIC_TOL)?;
    Ok(d.raw.restrict(maze.context_states()).normalize())
}

/// π-contextual distance over contexts for the optimal policy or a seeded
/// uniformly random stochastic policy, scaled to max 1.
pub fn policy_metric_table(maze: &Maze, random: Option<u64>) -> Result<DistanceTable, CliError> {
    let cmdp = maze.cmdp();
    let policy = match random {
        None => value_iteration(cmdp, METRIC_TOL)?.policy,
        Some(seed) => Policy::random(cmdp.n_states(), cmdp.n_actions(), &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(geocurr_core::learner::LearnError::from)?,
    };
    let d = pi_contextual_distance(cmdp, &policy, cmdp.gamma(), METRIC_TOL)?;
    Ok(d.contexts(cmdp)?.normalize())
}

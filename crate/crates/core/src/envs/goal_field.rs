use std::collections::VecDeque;

use rand::Rng;

use super::{ContextSpace, EnvError, EpisodicEnv, Transition};
use crate::ot::TaskDistribution;

/// Lattice offsets of the five actions: north (+y), south, west (-x), east, stay.
pub const FIELD_ACTIONS: [(isize, isize); 5] = [(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)];

/// Closed axis-aligned box `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self, EnvError> {
        if !(min.iter().chain(&max).all(|v| v.is_finite()) && min[0] < max[0] && min[1] < max[1]) {
            return Err(EnvError::Model(format!("degenerate box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == 2 && (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    fn diagonal(&self) -> f64 {
        (self.max[0] - self.min[0]).hypot(self.max[1] - self.min[1])
    }
}

/// A 2D navigation task on a lattice inside `bounds`; the context is the goal.
///
/// The agent moves between lattice points spaced `step_size` apart starting
/// at the lattice point nearest `origin`. Lattice points inside an obstacle
/// cannot be entered. The episode ends once the agent is within
/// `goal_radius` of the goal, each step costing `step_penalty`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalField {
    bounds: Rect,
    goal_radius: f64,
    max_steps: usize,
    step_penalty: f64,
    step_size: f64,
    origin: (usize, usize),
    obstacles: Vec<Rect>,
    nx: usize,
    ny: usize,
    gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldObservation {
    /// Tabular index combining the agent and goal lattice points.
    pub state: usize,
    pub agent: [f64; 2],
    pub goal: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub ret: f64,
    pub steps: usize,
    pub reached: bool,
}

impl GoalField {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bounds: Rect,
        goal_radius: f64,
        max_steps: usize,
        step_penalty: f64,
        step_size: f64,
        origin: [f64; 2],
        obstacles: Vec<Rect>,
        gamma: f64,
    ) -> Result<Self, EnvError> {
        if !(goal_radius > 0.0 && goal_radius < bounds.diagonal()) {
            return Err(EnvError::Model(format!("goal radius {goal_radius} must be positive and below the box diagonal")));
        }
        if max_steps == 0 {
            return Err(EnvError::Model("max_steps must be positive".into()));
        }
        if !step_penalty.is_finite() {
            return Err(EnvError::Model(format!("non-finite step penalty {step_penalty}")));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(EnvError::Model(format!("step size must be positive, got {step_size}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnvError::Model(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !bounds.contains(&origin) {
            return Err(EnvError::Model(format!("origin {origin:?} outside the bounds")));
        }
        let nx = ((bounds.max[0] - bounds.min[0]) / step_size + 1e-9).floor() as usize + 1;
        let ny = ((bounds.max[1] - bounds.min[1]) / step_size + 1e-9).floor() as usize + 1;
        let mut field = Self {
            bounds,
            goal_radius,
            max_steps,
            step_penalty,
            step_size,
            origin: (0, 0),
            obstacles,
            nx,
            ny,
            gamma,
        };
        field.origin = field.nearest_point(&origin);
        if field.blocked(field.origin) {
            return Err(EnvError::Model("origin lies inside an obstacle".into()));
        }
        Ok(field)
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn goal_radius(&self) -> f64 {
        self.goal_radius
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn step_penalty(&self) -> f64 {
        self.step_penalty
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    /// Number of lattice points.
    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn origin(&self) -> [f64; 2] {
        self.position(self.origin)
    }

    /// Lattice points outside every obstacle, ordered by x, then y.
    pub fn free_points(&self) -> Vec<[f64; 2]> {
        (0..self.n_points()).map(|k| self.point_of(k)).filter(|&pt| !self.blocked(pt)).map(|pt| self.position(pt)).collect()
    }

    /// Whether `p` lies inside any obstacle.
    pub fn in_obstacle(&self, p: &[f64]) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    pub fn position(&self, (i, j): (usize, usize)) -> [f64; 2] {
        [self.bounds.min[0] + i as f64 * self.step_size, self.bounds.min[1] + j as f64 * self.step_size]
    }

    pub fn nearest_point(&self, p: &[f64]) -> (usize, usize) {
        let snap = |v: f64, lo: f64, n: usize| (((v - lo) / self.step_size).round().max(0.0) as usize).min(n - 1);
        (snap(p[0], self.bounds.min[0], self.nx), snap(p[1], self.bounds.min[1], self.ny))
    }

    fn point_index(&self, (i, j): (usize, usize)) -> usize {
        i * self.ny + j
    }

    fn point_of(&self, k: usize) -> (usize, usize) {
        (k / self.ny, k % self.ny)
    }

    fn blocked(&self, pt: (usize, usize)) -> bool {
        self.in_obstacle(&self.position(pt))
    }

    fn moved(&self, pt: (usize, usize), action: usize) -> (usize, usize) {
        let (di, dj) = FIELD_ACTIONS[action];
        let i = pt.0 as isize + di;
        let j = pt.1 as isize + dj;
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            return pt;
        }
        let next = (i as usize, j as usize);
        if self.blocked(next) {
            pt
        } else {
            next
        }
    }

    fn reached(&self, pt: (usize, usize), goal: &[f64; 2]) -> bool {
        let p = self.position(pt);
        (p[0] - goal[0]).hypot(p[1] - goal[1]) <= self.goal_radius
    }

    fn check_goal(&self, goal: &[f64]) -> Result<[f64; 2], EnvError> {
        if goal.len() != 2 || !self.bounds.contains(goal) {
            return Err(EnvError::Context(format!("goal {goal:?} outside the field bounds")));
        }
        Ok([goal[0], goal[1]])
    }

    fn encode(&self, agent: (usize, usize), goal: &[f64; 2]) -> usize {
        self.point_index(agent) * self.n_points() + self.point_index(self.nearest_point(goal))
    }

    /// Fewest moves from the origin until the goal region is entered, if any.
    pub fn shortest_steps(&self, goal: &[f64]) -> Result<Option<usize>, EnvError> {
        let goal = self.check_goal(goal)?;
        let mut dist = vec![usize::MAX; self.n_points()];
        dist[self.point_index(self.origin)] = 0;
        let mut queue = VecDeque::from([self.origin]);
        while let Some(pt) = queue.pop_front() {
            let d = dist[self.point_index(pt)];
            if self.reached(pt, &goal) {
                return Ok(Some(d));
            }
            for a in 0..FIELD_ACTIONS.len() {
                let next = self.moved(pt, a);
                let k = self.point_index(next);
                if dist[k] == usize::MAX {
                    dist[k] = d + 1;
                    queue.push_back(next);
                }
            }
        }
        Ok(None)
    }
}

/// Runs one episode towards `goal` from the field origin.
pub fn goal_field_episode<R, P>(field: &GoalField, mut policy: P, goal: &[f64], rng: &mut R) -> Result<EpisodeOutcome, EnvError>
where
    R: Rng + ?Sized,
    P: FnMut(&FieldObservation, &mut R) -> usize,
{
    let goal = field.check_goal(goal)?;
    let mut pt = field.origin;
    let mut steps = 0;
    while !field.reached(pt, &goal) {
        if steps == field.max_steps {
            return Ok(EpisodeOutcome { ret: field.step_penalty * steps as f64, steps, reached: false });
        }
        let obs = FieldObservation { state: field.encode(pt, &goal), agent: field.position(pt), goal };
        let a = policy(&obs, rng);
        if a >= FIELD_ACTIONS.len() {
            return Err(EnvError::OutOfRange { what: "action", index: a, size: FIELD_ACTIONS.len() });
        }
        pt = field.moved(pt, a);
        steps += 1;
    }
    Ok(EpisodeOutcome { ret: field.step_penalty * steps as f64, steps, reached: true })
}

impl ContextSpace for GoalField {
    fn dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.bounds.min.to_vec(), self.bounds.max.to_vec())
    }

    fn is_valid(&self, c: &[f64]) -> bool {
        self.bounds.contains(c) && !self.in_obstacle(c)
    }

    fn sample_valid<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let c: Vec<f64> = (0..2).map(|k| rng.random_range(self.bounds.min[k]..=self.bounds.max[k])).collect();
            if !self.in_obstacle(&c) {
                return c;
            }
        }
    }

    /// Clamps into the bounds; contexts inside an obstacle move to the
    /// nearest free lattice point.
    fn project(&self, c: &[f64]) -> Vec<f64> {
        let clamped: Vec<f64> = (0..2).map(|k| c[k].clamp(self.bounds.min[k], self.bounds.max[k])).collect();
        if !self.in_obstacle(&clamped) {
            return clamped;
        }
        let mut best = self.position(self.origin);
        let mut best_d = f64::INFINITY;
        for k in 0..self.n_points() {
            let pt = self.point_of(k);
            if self.blocked(pt) {
                continue;
            }
            let p = self.position(pt);
            let d = (p[0] - clamped[0]).hypot(p[1] - clamped[1]);
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        best.to_vec()
    }
}

impl EpisodicEnv for GoalField {
    type Context = [f64; 2];

    fn n_states(&self) -> usize {
        self.n_points() * self.n_points()
    }

    fn n_actions(&self) -> usize {
        FIELD_ACTIONS.len()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn horizon(&self) -> Option<usize> {
        Some(self.max_steps)
    }

    fn sample_context<R: Rng + ?Sized>(&self, dist: &TaskDistribution, rng: &mut R) -> Result<[f64; 2], EnvError> {
        let particles = dist
            .as_particles()
            .ok_or_else(|| EnvError::Context("goal fields need a particle context distribution".into()))?;
        self.check_goal(particles.sample(rng))
    }

    fn reset<R: Rng + ?Sized>(&self, context: &[f64; 2], _rng: &mut R) -> Result<usize, EnvError> {
        let goal = self.check_goal(context)?;
        Ok(self.encode(self.origin, &goal))
    }

    fn is_done(&self, state: usize, context: &[f64; 2]) -> bool {
        self.reached(self.point_of(state / self.n_points()), context)
    }

    fn transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        context: &[f64; 2],
        _rng: &mut R,
    ) -> Result<Transition, EnvError> {
        if state >= self.n_states() {
            return Err(EnvError::OutOfRange { what: "state", index: state, size: self.n_states() });
        }
        if action >= FIELD_ACTIONS.len() {
            return Err(EnvError::OutOfRange { what: "action", index: action, size: FIELD_ACTIONS.len() });
        }
        let agent = self.point_of(state / self.n_points());
        let next = self.moved(agent, action);
        Ok(Transition {
            next: self.encode(next, context),
            reward: self.step_penalty,
            terminal: self.reached(next, context),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_field() -> GoalField {
        let bounds = Rect::new([0.0, 0.0], [10.0, 10.0]).unwrap();
        GoalField::new(bounds, 0.5, 20, -1.0, 1.0, [0.0, 0.0], vec![], 0.99).unwrap()
    }

    #[test]
    fn projection_leaves_obstacles() {
        let bounds = Rect::new([0.0, 0.0], [10.0, 10.0]).unwrap();
        let wall = Rect::new([0.0, 4.0], [7.0, 6.0]).unwrap();
        let f = GoalField::new(bounds, 0.5, 20, -1.0, 1.0, [1.0, 1.0], vec![wall], 0.99).unwrap();
        assert_eq!(f.project(&[2.0, 2.0]), vec![2.0, 2.0]);
        assert_eq!(f.project(&[12.0, -1.0]), vec![10.0, 0.0]);
        let p = f.project(&[3.2, 4.4]);
        assert!(f.is_valid(&p));
        assert_eq!(p, vec![3.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..200).all(|_| f.is_valid(&f.sample_valid(&mut rng))));
    }

    #[test]
    fn goal_at_origin_ends_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = goal_field_episode(&open_field(), |_, _| 4, &[0.2, 0.1], &mut rng).unwrap();
        assert_eq!(out, EpisodeOutcome { ret: 0.0, steps: 0, reached: true });
    }

    #[test]
    fn staying_exhausts_the_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = goal_field_episode(&open_field(), |_, _| 4, &[9.0, 9.0], &mut rng).unwrap();
        assert_eq!(out, EpisodeOutcome { ret: -20.0, steps: 20, reached: false });
    }

    #[test]
    fn heading_east_five_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = goal_field_episode(&open_field(), |_, _| 3, &[5.0, 0.0], &mut rng).unwrap();
        assert_eq!(out, EpisodeOutcome { ret: -5.0, steps: 5, reached: true });
        assert_eq!(open_field().shortest_steps(&[5.0, 0.0]).unwrap(), Some(5));
    }

    #[test]
    fn goal_outside_bounds_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = goal_field_episode(&open_field(), |_, _| 4, &[11.0, 0.0], &mut rng).unwrap_err();
        assert!(matches!(err, EnvError::Context(_)));
    }

    #[test]
    fn obstacles_block_moves() {
        let bounds = Rect::new([0.0, 0.0], [4.0, 4.0]).unwrap();
        let wall = Rect::new([0.5, -1.0], [1.5, 2.5]).unwrap();
        let field = GoalField::new(bounds, 0.5, 50, -1.0, 1.0, [0.0, 0.0], vec![wall], 0.99).unwrap();
        // Around the wall: up 3, right 2, down 3.
        assert_eq!(field.shortest_steps(&[2.0, 0.0]).unwrap(), Some(8));
        assert!(field.in_obstacle(&[1.0, 1.0]));
        assert!(!field.in_obstacle(&[2.0, 1.0]));
    }

    #[test]
    fn radius_must_fit_the_box() {
        let bounds = Rect::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!(GoalField::new(bounds, 2.0, 5, -1.0, 1.0, [0.0, 0.0], vec![], 0.9).is_err());
        assert!(GoalField::new(bounds, 0.0, 5, -1.0, 1.0, [0.0, 0.0], vec![], 0.9).is_err());
    }
}

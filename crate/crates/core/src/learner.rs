//! Tabular Q-learning for training inside curriculum stages, and exact
//! dynamic-programming oracles (policy evaluation, value iteration).

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::envs::{EnvError, EpisodicEnv, TabularCMDP};
use crate::ot::TaskDistribution;
use crate::policy::{Policy, PolicyError};

/// Two action values closer than this are treated as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("policy covers {policy} states, model has {model}")]
    Shape { policy: usize, model: usize },
}

/// Action-value table with visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    values: Array2<f64>,
    visits: Array2<u64>,
}

impl QTable {
    /// Zero-initialized table.
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { values: Array2::zeros((n_states, n_actions)), visits: Array2::zeros((n_states, n_actions)) }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn visits(&self) -> &Array2<u64> {
        &self.visits
    }

    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.values.ncols()
    }

    /// First action with the maximal value.
    pub fn greedy_action(&self, state: usize) -> usize {
        let row = self.values.row(state);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.values.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One-hot argmax policy; ties go to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions: Vec<usize> = (0..q.n_states()).map(|s| q.greedy_action(s)).collect();
    Policy::deterministic(&actions, q.n_actions()).expect("argmax indices are in range")
}

/// Linear decay of the exploration rate from `start` to `end` over
/// `decay_episodes` episodes, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: u64) -> f64 {
        if self.decay_episodes == 0 {
            return self.end;
        }
        let frac = (episode as f64 / self.decay_episodes as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

/// Whether the exploration schedule restarts at every curriculum stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsilonScope {
    Run,
    Stage,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub epsilon: EpsilonSchedule,
    pub epsilon_scope: EpsilonScope,
    pub episodes_per_round: usize,
    pub max_episode_steps: usize,
}

impl LearnerConfig {
    /// Defaults for a maze of the given grid size.
    pub fn for_grid(height: usize, width: usize) -> Self {
        Self {
            learning_rate: 0.1,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay_episodes: 1000 },
            epsilon_scope: EpsilonScope::Run,
            episodes_per_round: 50,
            max_episode_steps: 4 * (height + width),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(LearnError::Config(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate)));
        }
        let e = self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end)) {
            return Err(LearnError::Config(format!("epsilon endpoints must lie in [0, 1], got {} and {}", e.start, e.end)));
        }
        if self.max_episode_steps == 0 {
            return Err(LearnError::Config("max_episode_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Q-learning state carried across rounds and curriculum stages.
#[derive(Clone, Debug)]
pub struct QLearner {
    q: QTable,
    cfg: LearnerConfig,
    gamma: f64,
    run_episodes: u64,
    stage_episodes: u64,
    env_steps: u64,
    budget: Option<u64>,
}

/// Summary of one training round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundOutcome {
    /// Mean undiscounted return of the completed episodes; `None` when no
    /// episode ran.
    pub mean_return: Option<f64>,
    pub episodes: usize,
    pub env_steps: u64,
    /// The run-wide step budget ran out during this round.
    pub budget_exhausted: bool,
}

impl QLearner {
    pub fn new<E: EpisodicEnv>(env: &E, cfg: LearnerConfig) -> Result<Self, LearnError> {
        cfg.validate()?;
        Ok(Self {
            q: QTable::new(env.n_states(), env.n_actions()),
            cfg,
            gamma: env.gamma(),
            run_episodes: 0,
            stage_episodes: 0,
            env_steps: 0,
            budget: None,
        })
    }

    /// Caps the total number of environment steps over the whole run.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn budget_left(&self) -> bool {
        self.budget.is_none_or(|b| self.env_steps < b)
    }

    pub fn begin_stage(&mut self) {
        self.stage_episodes = 0;
    }

    pub fn epsilon(&self) -> f64 {
        let e = match self.cfg.epsilon_scope {
            EpsilonScope::Run => self.run_episodes,
            EpsilonScope::Stage => self.stage_episodes,
        };
        self.cfg.epsilon.value(e)
    }
}

/// Hooks invoked while a round trains.
pub trait TrainingObserver<C: ?Sized> {
    /// Called after every environment step with the run-wide step count.
    fn on_step(&mut self, _env_steps: u64, _q: &QTable) {}
    /// Called after every completed episode with its context and return.
    fn on_episode(&mut self, _context: &C, _ret: f64) {}
}

impl<C: ?Sized, F: FnMut(u64, &QTable)> TrainingObserver<C> for F {
    fn on_step(&mut self, env_steps: u64, q: &QTable) {
        self(env_steps, q)
    }
}

/// Observer that ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl<C: ?Sized> TrainingObserver<C> for NoObserver {}

/// Runs `episodes_per_round` epsilon-greedy episodes on contexts drawn from
/// `stage` with one-step Q-learning updates.
pub fn q_learning_round<E, R, O>(
    env: &E,
    stage: &TaskDistribution,
    learner: &mut QLearner,
    rng: &mut R,
    observer: &mut O,
) -> Result<RoundOutcome, LearnError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
    O: TrainingObserver<E::Context> + ?Sized,
{
    let max_steps = env.horizon().map_or(learner.cfg.max_episode_steps, |h| h.min(learner.cfg.max_episode_steps));
    let lr = learner.cfg.learning_rate;
    let n_actions = env.n_actions();
    let start_steps = learner.env_steps;
    let mut total = 0.0;
    let mut episodes = 0;
    let mut exhausted = false;

    for _ in 0..learner.cfg.episodes_per_round {
        if !learner.budget_left() {
            exhausted = true;
            break;
        }
        let context = env.sample_context(stage, rng)?;
        let mut s = env.reset(&context, rng)?;
        let eps = learner.epsilon();
        let mut ret = 0.0;
        let mut done = env.is_done(s, &context);
        let mut t = 0;
        while !done && t < max_steps {
            if !learner.budget_left() {
                exhausted = true;
                break;
            }
            let a = if rng.random::<f64>() < eps { rng.random_range(0..n_actions) } else { learner.q.greedy_action(s) };
            let tr = env.transition(s, a, &context, rng)?;
            let bootstrap = if tr.terminal { 0.0 } else { learner.gamma * learner.q.max_value(tr.next) };
            let q = &mut learner.q.values[[s, a]];
            *q += lr * (tr.reward + bootstrap - *q);
            learner.q.visits[[s, a]] += 1;
            learner.env_steps += 1;
            observer.on_step(learner.env_steps, &learner.q);
            ret += tr.reward;
            done = tr.terminal;
            s = tr.next;
            t += 1;
        }
        if exhausted {
            break;
        }
        observer.on_episode(&context, ret);
        learner.run_episodes += 1;
        learner.stage_episodes += 1;
        total += ret;
        episodes += 1;
    }
    Ok(RoundOutcome {
        mean_return: (episodes > 0).then(|| total / episodes as f64),
        episodes,
        env_steps: learner.env_steps - start_steps,
        budget_exhausted: exhausted,
    })
}

/// Iteration cap for a `gamma`-contraction started within `scale` of its
/// fixed point to reach accuracy `tol`.
pub fn geometric_iteration_cap(gamma: f64, tol: f64, scale: f64) -> usize {
    let ratio = (tol / scale.max(tol)).max(f64::MIN_POSITIVE);
    (ratio.ln() / gamma.ln()).ceil().max(1.0) as usize + 1
}

/// State values of a policy and whether the iteration met its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValues {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn check_policy(cmdp: &TabularCMDP, policy: &Policy) -> Result<(), LearnError> {
    if policy.n_states() != cmdp.n_states() {
        return Err(LearnError::Shape { policy: policy.n_states(), model: cmdp.n_states() });
    }
    if policy.n_actions() != cmdp.n_actions() {
        return Err(LearnError::Shape { policy: policy.n_actions(), model: cmdp.n_actions() });
    }
    if !cmdp.is_homogeneous() {
        return Err(LearnError::Config("dynamic programming oracles need context-independent dynamics".into()));
    }
    Ok(())
}

/// Expected one-step reward under `policy` at every state.
pub(crate) fn policy_rewards(cmdp: &TabularCMDP, policy: &Policy) -> Vec<f64> {
    (0..cmdp.n_states())
        .map(|s| (0..cmdp.n_actions()).map(|a| policy.prob(s, a) * cmdp.r(s, a)).sum())
        .collect()
}

/// Successor distribution under `policy` at every state, merged per target.
pub(crate) fn policy_successors(cmdp: &TabularCMDP, policy: &Policy) -> Vec<Vec<(usize, f64)>> {
    (0..cmdp.n_states())
        .map(|s| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for a in 0..cmdp.n_actions() {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for &(t, p) in cmdp.row(s, a) {
                    match row.iter_mut().find(|e| e.0 == t) {
                        Some(e) => e.1 += pa * p,
                        None => row.push((t, pa * p)),
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect()
}

/// Solves the Bellman expectation equation for every state to 1e-10.
pub fn state_values(cmdp: &TabularCMDP, policy: &Policy) -> Result<StateValues, LearnError> {
    check_policy(cmdp, policy)?;
    let gamma = cmdp.gamma();
    let reward = policy_rewards(cmdp, policy);
    let succ = policy_successors(cmdp, policy);
    let (lo, hi) = cmdp.reward_bounds();
    let scale = lo.abs().max(hi.abs()) / (1.0 - gamma);
    // Stop once the remaining error gamma/(1-gamma)*delta is below 1e-10.
    let stop = 1e-10 * (1.0 - gamma) / gamma;
    let cap = 2 * geometric_iteration_cap(gamma, stop, scale.max(1.0));
    let mut v = vec![0.0; cmdp.n_states()];
    for it in 1..=cap {
        let mut delta: f64 = 0.0;
        for s in 0..v.len() {
            if cmdp.is_terminal(s) {
                continue;
            }
            let next: f64 = succ[s].iter().map(|&(t, p)| p * v[t]).sum();
            let nv = reward[s] + gamma * next;
            delta = delta.max((nv - v[s]).abs());
            v[s] = nv;
        }
        if delta <= stop {
            return Ok(StateValues { values: v, converged: true, iterations: it });
        }
    }
    Ok(StateValues { values: v, converged: false, iterations: cap })
}

/// Discounted value of `policy` from the start distribution of `context`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueEstimate {
    pub value: f64,
    pub converged: bool,
}

pub fn policy_evaluation(cmdp: &TabularCMDP, policy: &Policy, context: usize) -> Result<ValueEstimate, LearnError> {
    let init = cmdp.initial_state(context)?.clone();
    let sv = state_values(cmdp, policy)?;
    let value = init.weights().iter().zip(&sv.values).map(|(p, v)| p * v).sum();
    Ok(ValueEstimate { value, converged: sv.converged })
}

/// Optimal values and the greedy policy derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimal {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub converged: bool,
}

/// Value iteration to sup-norm change `eps_tol`; the greedy policy breaks
/// near-ties towards the lowest action.
pub fn value_iteration(cmdp: &TabularCMDP, eps_tol: f64) -> Result<Optimal, LearnError> {
    if eps_tol.is_nan() || eps_tol <= 0.0 {
        return Err(LearnError::Config(format!("eps_tol must be positive, got {eps_tol}")));
    }
    if !cmdp.is_homogeneous() {
        return Err(LearnError::Config("dynamic programming oracles need context-independent dynamics".into()));
    }
    let gamma = cmdp.gamma();
    let (lo, hi) = cmdp.reward_bounds();
    let scale = lo.abs().max(hi.abs()) / (1.0 - gamma);
    let cap = 2 * geometric_iteration_cap(gamma, eps_tol, scale.max(1.0));
    let n = cmdp.n_states();
    let q_of = |v: &[f64], s: usize, a: usize| cmdp.r(s, a) + gamma * cmdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>();
    let mut v = vec![0.0; n];
    let mut converged = false;
    for _ in 0..cap {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if cmdp.is_terminal(s) {
                continue;
            }
            let nv = (0..cmdp.n_actions()).map(|a| q_of(&v, s, a)).fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((nv - v[s]).abs());
            v[s] = nv;
        }
        if delta <= eps_tol {
            converged = true;
            break;
        }
    }
    let actions: Vec<usize> = (0..n)
        .map(|s| {
            let qs: Vec<f64> = (0..cmdp.n_actions()).map(|a| q_of(&v, s, a)).collect();
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            qs.iter().position(|&x| x >= best - TIE_TOL).expect("nonempty action set")
        })
        .collect();
    let policy = Policy::deterministic(&actions, cmdp.n_actions())?;
    Ok(Optimal { values: v, policy, converged })
}

/// Monte-Carlo summary of undiscounted episodic returns.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Mean undiscounted return of `policy` over `n_episodes` contexts drawn from
/// `dist`, each episode capped at `max_steps`.
pub fn evaluate_return<E, R>(
    env: &E,
    policy: &Policy,
    dist: &TaskDistribution,
    n_episodes: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<ReturnStats, LearnError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
{
    if policy.n_states() != env.n_states() {
        return Err(LearnError::Shape { policy: policy.n_states(), model: env.n_states() });
    }
    evaluate_with(env, |s, rng| policy.sample(s, rng), dist, n_episodes, max_steps, rng)
}

/// [`evaluate_return`] for the greedy policy of `q`, without materializing it.
pub fn evaluate_greedy<E, R>(
    env: &E,
    q: &QTable,
    dist: &TaskDistribution,
    n_episodes: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<ReturnStats, LearnError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
{
    if q.n_states() != env.n_states() {
        return Err(LearnError::Shape { policy: q.n_states(), model: env.n_states() });
    }
    evaluate_with(env, |s, _| q.greedy_action(s), dist, n_episodes, max_steps, rng)
}

fn evaluate_with<E, R, P>(
    env: &E,
    mut act: P,
    dist: &TaskDistribution,
    n_episodes: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<ReturnStats, LearnError>
where
    E: EpisodicEnv,
    R: Rng + ?Sized,
    P: FnMut(usize, &mut R) -> usize,
{
    if n_episodes == 0 {
        return Err(LearnError::Config("n_episodes must be at least 1".into()));
    }
    let max_steps = env.horizon().map_or(max_steps, |h| h.min(max_steps));
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let context = env.sample_context(dist, rng)?;
        let mut s = env.reset(&context, rng)?;
        let mut ret = 0.0;
        let mut done = env.is_done(s, &context);
        let mut t = 0;
        while !done && t < max_steps {
            let a = act(s, rng);
            let tr = env.transition(s, a, &context, rng)?;
            ret += tr.reward;
            done = tr.terminal;
            s = tr.next;
            t += 1;
        }
        returns.push(ret);
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n_episodes as f64;
    Ok(ReturnStats { mean, std: var.sqrt(), returns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{maze_from_layout, MazeLayout, MazeParams, TabularBuilder};
    use crate::ot::Categorical;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(gamma: f64) -> TabularCMDP {
        let layout: MazeLayout = "..G".parse().unwrap();
        maze_from_layout(&layout, &MazeParams { gamma, ..MazeParams::default() }).unwrap().cmdp().clone()
    }

    #[test]
    fn greedy_ties_go_to_lowest_action() {
        let mut q = QTable::new(3, 4);
        q.values.row_mut(1).assign(&ndarray::arr1(&[1.0, 3.0, 2.0, 3.0]));
        q.values.column_mut(2).fill(9.0);
        q.values[[0, 2]] = 0.0;
        let p = greedy_policy(&q);
        assert_eq!(p.action(0), Some(0));
        assert_eq!(p.action(1), Some(2));
        assert_eq!(p.action(2), Some(2));
        assert_eq!(greedy_policy(&QTable::new(2, 4)).action(1), Some(0));
    }

    #[test]
    fn chain_values() {
        let m = chain(0.9);
        let east = Policy::deterministic(&[3, 3, 3], 4).unwrap();
        let v0 = policy_evaluation(&m, &east, 0).unwrap();
        let v1 = policy_evaluation(&m, &east, 1).unwrap();
        assert!(v0.converged);
        assert!((v0.value + 1.0).abs() < 1e-10);
        assert!(v1.value.abs() < 1e-10);
        let opt = value_iteration(&m, 1e-12).unwrap();
        assert!((opt.values[0] + 1.0).abs() < 1e-10);
        assert_eq!(opt.policy.action(0), Some(3));
    }

    #[test]
    fn absorbing_zero_reward_state_has_zero_value() {
        let m = TabularBuilder::new(1, 2, 0.5).terminal(0).context_at(0).build().unwrap();
        let opt = value_iteration(&m, 1e-12).unwrap();
        assert_eq!(opt.values, vec![0.0]);
        let p = Policy::uniform(1, 2).unwrap();
        assert_eq!(policy_evaluation(&m, &p, 0).unwrap().value, 0.0);
    }

    #[test]
    fn optimal_policy_is_a_fixed_point() {
        let layout: MazeLayout = "G.#.\n..#.\n....".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams::default()).unwrap();
        let opt = value_iteration(m.cmdp(), 1e-12).unwrap();
        let sv = state_values(m.cmdp(), &opt.policy).unwrap();
        for (a, b) in sv.values.iter().zip(&opt.values) {
            assert!((a - b).abs() < 1e-8);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rand_pol = Policy::random(m.cmdp().n_states(), 4, &mut rng).unwrap();
        let rv = state_values(m.cmdp(), &rand_pol).unwrap();
        for (a, b) in rv.values.iter().zip(&opt.values) {
            assert!(*a <= b + 1e-9);
        }
    }

    #[test]
    fn zero_episode_round_leaves_table() {
        let m = chain(0.9);
        let cfg = LearnerConfig { episodes_per_round: 0, ..LearnerConfig::for_grid(1, 3) };
        let mut learner = QLearner::new(&m, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dist: TaskDistribution = Categorical::uniform(2).unwrap().into();
        let out = q_learning_round(&m, &dist, &mut learner, &mut rng, &mut NoObserver).unwrap();
        assert_eq!(out.mean_return, None);
        assert_eq!(learner.q(), &QTable::new(3, 4));
    }

    #[test]
    fn q_learning_finds_optimal_policy_and_is_deterministic() {
        let layout: MazeLayout = "G..#\n.#..\n....".parse().unwrap();
        let maze = maze_from_layout(&layout, &MazeParams::default()).unwrap();
        let m = maze.cmdp();
        let dist: TaskDistribution = Categorical::uniform(m.n_contexts()).unwrap().into();
        let train = |seed: u64| {
            let mut learner = QLearner::new(m, LearnerConfig::for_grid(3, 4)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..60 {
                q_learning_round(m, &dist, &mut learner, &mut rng, &mut NoObserver).unwrap();
            }
            learner
        };
        let learner = train(5);
        assert_eq!(learner.q(), train(5).q());
        let opt = value_iteration(m, 1e-12).unwrap();
        let greedy = greedy_policy(learner.q());
        for c in 0..m.n_contexts() {
            let v = policy_evaluation(m, &greedy, c).unwrap().value;
            let s = maze.context_states()[c];
            assert!((v - opt.values[s]).abs() < 1e-6, "context {c}: {v} vs {}", opt.values[s]);
        }
    }

    #[test]
    fn budget_stops_training() {
        let m = chain(0.9);
        let mut learner = QLearner::new(&m, LearnerConfig::for_grid(1, 3)).unwrap().with_budget(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist: TaskDistribution = Categorical::uniform(2).unwrap().into();
        let mut calls = 0;
        let out = q_learning_round(&m, &dist, &mut learner, &mut rng, &mut |_, _: &QTable| calls += 1).unwrap();
        assert!(out.budget_exhausted);
        assert_eq!(learner.env_steps(), 7);
        assert_eq!(calls, 7);
    }

    #[test]
    fn point_mass_evaluation_has_no_variance() {
        let m = chain(0.9);
        let p = Policy::deterministic(&[3, 3, 3], 4).unwrap();
        let dist: TaskDistribution = Categorical::dirac(2, 0).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats = evaluate_return(&m, &p, &dist, 30, 100, &mut rng).unwrap();
        assert_eq!(stats.mean, -1.0);
        assert_eq!(stats.std, 0.0);
    }

    #[test]
    fn epsilon_decays_linearly() {
        let e = EpsilonSchedule { start: 1.0, end: 0.05, decay_episodes: 100 };
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(50) - 0.525).abs() < 1e-12);
        assert!((e.value(500) - 0.05).abs() < 1e-12);
    }
}

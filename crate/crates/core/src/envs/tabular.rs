use rand::Rng;

use super::{EnvError, EpisodicEnv, Transition};
use crate::ot::{Categorical, TaskDistribution};

const ROW_TOL: f64 = 1e-9;

/// Sparse successor distribution: `(next_state, probability)` pairs.
pub type Row = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq)]
struct Dynamics {
    /// Indexed by `state * n_actions + action`.
    next: Vec<Row>,
    reward: Vec<f64>,
}

/// Finite contextual MDP with explicit transition and reward tables.
///
/// Contexts share one of possibly several dynamics tables. Terminal states
/// end episodes; they must be absorbing with zero reward so that episodic
/// returns and discounted values agree.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularCMDP {
    n_states: usize,
    n_actions: usize,
    dynamics: Vec<Dynamics>,
    context_dynamics: Vec<usize>,
    initial: Vec<Categorical>,
    terminal: Vec<bool>,
    gamma: f64,
    reward_bounds: (f64, f64),
    /// `Some(states)` when every context starts deterministically at its own
    /// state and all contexts share the dynamics.
    context_states: Option<Vec<usize>>,
}

impl TabularCMDP {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_contexts(&self) -> usize {
        self.initial.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward_bounds
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_states(&self) -> &[bool] {
        &self.terminal
    }

    /// Start states of the contexts when each context is identified with a
    /// state and dynamics are context independent.
    pub fn context_states(&self) -> Option<&[usize]> {
        self.context_states.as_deref()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.context_states.is_some()
    }

    pub fn initial_state(&self, context: usize) -> Result<&Categorical, EnvError> {
        self.check_context(context)?;
        Ok(&self.initial[context])
    }

    pub fn transition_row(&self, state: usize, action: usize, context: usize) -> Result<&[(usize, f64)], EnvError> {
        self.check(state, action, context)?;
        Ok(&self.dynamics[self.context_dynamics[context]].next[state * self.n_actions + action])
    }

    pub fn reward(&self, state: usize, action: usize, context: usize) -> Result<f64, EnvError> {
        self.check(state, action, context)?;
        Ok(self.dynamics[self.context_dynamics[context]].reward[state * self.n_actions + action])
    }

    /// Successor row of the shared dynamics; only valid for homogeneous models.
    pub(crate) fn row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.dynamics[0].next[state * self.n_actions + action]
    }

    pub(crate) fn r(&self, state: usize, action: usize) -> f64 {
        self.dynamics[0].reward[state * self.n_actions + action]
    }

    /// Every transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.dynamics.iter().all(|d| d.next.iter().all(|r| r.len() == 1))
    }

    fn check_context(&self, context: usize) -> Result<(), EnvError> {
        if context >= self.initial.len() {
            return Err(EnvError::OutOfRange { what: "context", index: context, size: self.initial.len() });
        }
        Ok(())
    }

    fn check(&self, state: usize, action: usize, context: usize) -> Result<(), EnvError> {
        if state >= self.n_states {
            return Err(EnvError::OutOfRange { what: "state", index: state, size: self.n_states });
        }
        if action >= self.n_actions {
            return Err(EnvError::OutOfRange { what: "action", index: action, size: self.n_actions });
        }
        self.check_context(context)
    }
}

/// Draws from a sparse row; point masses consume no randomness.
pub(crate) fn sample_row<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    if row.len() == 1 {
        return row[0].0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(s, p) in row {
        acc += p;
        if u < acc {
            return s;
        }
    }
    row[row.len() - 1].0
}

/// Samples the successor and reward of `(state, action)` under `context`.
pub fn step<R: Rng + ?Sized>(
    cmdp: &TabularCMDP,
    state: usize,
    action: usize,
    context: usize,
    rng: &mut R,
) -> Result<(usize, f64), EnvError> {
    let row = cmdp.transition_row(state, action, context)?;
    let reward = cmdp.reward(state, action, context)?;
    Ok((sample_row(row, rng), reward))
}

/// Discrete context index set `0..n_contexts`.
pub fn enumerate_contexts(cmdp: &TabularCMDP) -> Vec<usize> {
    (0..cmdp.n_contexts()).collect()
}

impl EpisodicEnv for TabularCMDP {
    type Context = usize;

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_context<R: Rng + ?Sized>(&self, dist: &TaskDistribution, rng: &mut R) -> Result<usize, EnvError> {
        let cat = dist
            .as_categorical()
            .ok_or_else(|| EnvError::Context("tabular models need a categorical context distribution".into()))?;
        if cat.len() != self.n_contexts() {
            return Err(EnvError::Context(format!(
                "distribution has {} bins, model has {} contexts",
                cat.len(),
                self.n_contexts()
            )));
        }
        Ok(cat.sample(rng))
    }

    fn reset<R: Rng + ?Sized>(&self, context: &usize, rng: &mut R) -> Result<usize, EnvError> {
        let init = self.initial_state(*context)?;
        let row: Row = init.support(0.0).into_iter().map(|s| (s, init.weights()[s])).collect();
        Ok(sample_row(&row, rng))
    }

    fn is_done(&self, state: usize, _context: &usize) -> bool {
        self.terminal.get(state).copied().unwrap_or(false)
    }

    fn transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        context: &usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        let (next, reward) = step(self, state, action, *context, rng)?;
        Ok(Transition { next, reward, terminal: self.terminal[next] })
    }
}

/// Incremental construction of a homogeneous [`TabularCMDP`].
#[derive(Clone, Debug)]
pub struct TabularBuilder {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    next: Vec<Option<Row>>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    starts: Vec<Start>,
}

#[derive(Clone, Debug)]
enum Start {
    At(usize),
    Dist(Categorical),
}

impl TabularBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            next: vec![None; n_states * n_actions],
            reward: vec![0.0; n_states * n_actions],
            terminal: vec![false; n_states],
            starts: Vec::new(),
        }
    }

    pub fn transition(mut self, state: usize, action: usize, row: Row, reward: f64) -> Self {
        if state < self.n_states && action < self.n_actions {
            self.next[state * self.n_actions + action] = Some(row);
            self.reward[state * self.n_actions + action] = reward;
        }
        self
    }

    /// Terminal absorbing state with zero reward under every action.
    pub fn terminal(mut self, state: usize) -> Self {
        if state < self.n_states {
            self.terminal[state] = true;
            for a in 0..self.n_actions {
                self.next[state * self.n_actions + a] = Some(vec![(state, 1.0)]);
                self.reward[state * self.n_actions + a] = 0.0;
            }
        }
        self
    }

    /// Adds a context that starts deterministically at `state`.
    pub fn context_at(mut self, state: usize) -> Self {
        self.starts.push(Start::At(state));
        self
    }

    /// Adds a context with a general start distribution over states.
    pub fn context_with(mut self, initial: Categorical) -> Self {
        self.starts.push(Start::Dist(initial));
        self
    }

    pub fn build(self) -> Result<TabularCMDP, EnvError> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(EnvError::Model("need at least one state and one action".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(EnvError::Model(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.starts.is_empty() {
            return Err(EnvError::Model("no contexts".into()));
        }
        let mut next = Vec::with_capacity(self.next.len());
        for (k, row) in self.next.into_iter().enumerate() {
            let (s, a) = (k / self.n_actions, k % self.n_actions);
            let row = row.ok_or_else(|| EnvError::Model(format!("missing transition for state {s}, action {a}")))?;
            next.push(normalize_row(row, self.n_states, s, a)?);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in &self.reward {
            if !r.is_finite() {
                return Err(EnvError::Model(format!("non-finite reward {r}")));
            }
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let mut initial = Vec::with_capacity(self.starts.len());
        for start in self.starts {
            let init = match start {
                Start::At(s) => Categorical::dirac(self.n_states, s)
                    .map_err(|_| EnvError::OutOfRange { what: "start state", index: s, size: self.n_states })?,
                Start::Dist(d) if d.len() == self.n_states => d,
                Start::Dist(d) => {
                    return Err(EnvError::Model(format!(
                        "start distribution has {} bins, model has {} states",
                        d.len(),
                        self.n_states
                    )))
                }
            };
            initial.push(init);
        }
        let context_states: Option<Vec<usize>> = initial
            .iter()
            .map(|init| {
                let s = init.support(0.0);
                (s.len() == 1).then(|| s[0])
            })
            .collect();
        Ok(TabularCMDP {
            n_states: self.n_states,
            n_actions: self.n_actions,
            dynamics: vec![Dynamics { next, reward: self.reward }],
            context_dynamics: vec![0; initial.len()],
            initial,
            terminal: self.terminal,
            gamma: self.gamma,
            reward_bounds: (lo, hi),
            context_states,
        })
    }
}

fn normalize_row(row: Row, n_states: usize, s: usize, a: usize) -> Result<Row, EnvError> {
    let mut merged: Row = Vec::with_capacity(row.len());
    for (t, p) in row {
        if t >= n_states {
            return Err(EnvError::OutOfRange { what: "successor", index: t, size: n_states });
        }
        if !(p >= 0.0 && p.is_finite()) {
            return Err(EnvError::Model(format!("bad probability {p} for state {s}, action {a}")));
        }
        if p == 0.0 {
            continue;
        }
        match merged.iter_mut().find(|(u, _)| *u == t) {
            Some(e) => e.1 += p,
            None => merged.push((t, p)),
        }
    }
    let total: f64 = merged.iter().map(|e| e.1).sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(EnvError::Model(format!("row for state {s}, action {a} sums to {total}")));
    }
    merged.sort_by_key(|e| e.0);
    Ok(merged)
}

use ndarray::Array2;
use rayon::prelude::*;

use super::{DistanceTable, MetricError};
use crate::envs::TabularCMDP;
use crate::learner::{policy_rewards, policy_successors, state_values};
use crate::ot::{lp_cost, sinkhorn_solve, Epsilon, SinkhornConfig};
use crate::policy::Policy;

/// Largest successor support solved exactly inside the operator; larger
/// supports fall back to Sinkhorn at `1e-3 * max(d)`.
pub const BISIM_LP_SUPPORT: usize = 64;

/// Relative diagonal offset applied before normalizing a table for OT use.
pub const DIAGONAL_OFFSET: f64 = 1e-6;

/// A fixed-point table together with its iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct BisimResult {
    /// Raw (unnormalized) distances over all states.
    pub table: DistanceTable,
    pub converged: bool,
    pub iterations: usize,
}

impl BisimResult {
    /// Expected distance between the start states of every pair of contexts.
    pub fn contexts(&self, cmdp: &TabularCMDP) -> Result<DistanceTable, MetricError> {
        context_table(cmdp, &self.table)
    }
}

/// Raw and normalized outputs of [`exact_metric_deterministic`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExactMetric {
    /// Fixed point over all states, zero diagonal.
    pub raw: DistanceTable,
    /// `raw` with a diagonal offset of `1e-6 * max` and scaled to max 1.
    pub table: DistanceTable,
    pub converged: bool,
    pub iterations: usize,
}

impl ExactMetric {
    /// Context-by-context table with the diagonal offset, scaled to max 1.
    pub fn contexts_normalized(&self, cmdp: &TabularCMDP) -> Result<DistanceTable, MetricError> {
        Ok(context_table(cmdp, &self.raw)?.with_offset_normalized(DIAGONAL_OFFSET))
    }
}

struct Induced {
    reward: Vec<f64>,
    succ: Vec<Vec<(usize, f64)>>,
}

fn induced(cmdp: &TabularCMDP, policy: &Policy, table_len: usize) -> Result<Induced, MetricError> {
    if table_len != cmdp.n_states() {
        return Err(MetricError::Domain { table: table_len, states: cmdp.n_states() });
    }
    check_policy_shape(cmdp, policy)?;
    Ok(Induced { reward: policy_rewards(cmdp, policy), succ: policy_successors(cmdp, policy) })
}

fn check_policy_shape(cmdp: &TabularCMDP, policy: &Policy) -> Result<(), MetricError> {
    if policy.n_states() != cmdp.n_states() || policy.n_actions() != cmdp.n_actions() {
        return Err(MetricError::Invalid(format!(
            "policy is {}x{}, model has {} states and {} actions",
            policy.n_states(),
            policy.n_actions(),
            cmdp.n_states(),
            cmdp.n_actions()
        )));
    }
    if !cmdp.is_homogeneous() {
        return Err(MetricError::Invalid("contexts must be start states with shared dynamics".into()));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<(), MetricError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(MetricError::Invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Transport cost between two sparse distributions under the table `d`.
fn transport(p: &[(usize, f64)], q: &[(usize, f64)], d: &Array2<f64>) -> Result<f64, MetricError> {
    match (p, q) {
        ([(s, _)], _) => Ok(q.iter().map(|&(t, w)| w * d[[*s, t]]).sum()),
        (_, [(t, _)]) => Ok(p.iter().map(|&(s, w)| w * d[[s, *t]]).sum()),
        _ => {
            let a: Vec<f64> = p.iter().map(|e| e.1).collect();
            let mut b: Vec<f64> = q.iter().map(|e| e.1).collect();
            let scale = a.iter().sum::<f64>() / b.iter().sum::<f64>();
            b.iter_mut().for_each(|x| *x *= scale);
            let cost = Array2::from_shape_fn((p.len(), q.len()), |(i, j)| d[[p[i].0, q[j].0]]);
            if p.len() <= BISIM_LP_SUPPORT && q.len() <= BISIM_LP_SUPPORT {
                return Ok(lp_cost(&a, &b, &cost)?);
            }
            let max = cost.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                return Ok(0.0);
            }
            let cfg = SinkhornConfig { epsilon: Epsilon::Absolute(1e-3 * max), ..SinkhornConfig::default() };
            let sol = sinkhorn_solve(&a, &b, &cost, &cfg)?;
            Ok(sol.plan.iter().zip(cost.iter()).map(|(x, c)| x * c).sum())
        }
    }
}

fn apply(model: &Induced, d: &Array2<f64>, gamma: f64) -> Result<Array2<f64>, MetricError> {
    let n = model.reward.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    let w = if gamma == 0.0 { 0.0 } else { transport(&model.succ[i], &model.succ[j], d)? };
                    Ok((model.reward[i] - model.reward[j]).abs() + gamma * w)
                })
                .collect::<Result<Vec<f64>, MetricError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            out[[i, i + k]] = v;
            out[[i + k, i]] = v;
        }
    }
    Ok(out)
}

/// One application of the on-policy bisimulation operator:
/// `|R(i) - R(j)| + gamma * W_d(P(i), P(j))` with policy-averaged rewards
/// and successor distributions.
pub fn bisim_operator(
    d: &DistanceTable,
    cmdp: &TabularCMDP,
    policy: &Policy,
    gamma: f64,
) -> Result<DistanceTable, MetricError> {
    check_gamma(gamma)?;
    let model = induced(cmdp, policy, d.len())?;
    Ok(DistanceTable::from_raw(apply(&model, d.values(), gamma)?))
}

/// Default iteration cap: the geometric-series bound for reaching `eps_tol`
/// from the zero table, scaled by the reward span.
fn iteration_cap(gamma: f64, eps_tol: f64, span: f64) -> usize {
    if gamma == 0.0 {
        return 2;
    }
    let target = eps_tol * (1.0 - gamma) / span.max(1.0);
    (target.ln() / gamma.ln()).ceil().max(1.0) as usize + 1
}

fn reward_span(cmdp: &TabularCMDP) -> f64 {
    let (lo, hi) = cmdp.reward_bounds();
    hi - lo
}

/// Fixed point of [`bisim_operator`] iterated from the zero table until the
/// sup-norm change is at most `eps_tol`.
pub fn pi_contextual_distance(
    cmdp: &TabularCMDP,
    policy: &Policy,
    gamma: f64,
    eps_tol: f64,
) -> Result<BisimResult, MetricError> {
    check_gamma(gamma)?;
    if eps_tol.is_nan() || eps_tol <= 0.0 {
        return Err(MetricError::Invalid(format!("eps_tol must be positive, got {eps_tol}")));
    }
    let n = cmdp.n_states();
    let model = induced(cmdp, policy, n)?;
    let cap = iteration_cap(gamma, eps_tol, reward_span(cmdp));
    let mut d = Array2::zeros((n, n));
    for it in 1..=cap {
        let next = apply(&model, &d, gamma)?;
        let change = next.iter().zip(d.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = next;
        if change <= eps_tol {
            return Ok(BisimResult { table: DistanceTable::from_raw(d), converged: true, iterations: it });
        }
    }
    Ok(BisimResult { table: DistanceTable::from_raw(d), converged: false, iterations: cap })
}

/// Fixed point of `M[s1, s2] = |r1 - r2| + gamma * M[s1', s2']` for a
/// deterministic policy on deterministic dynamics, followed by a diagonal
/// offset of `1e-6 * max` and scaling to max 1.
pub fn exact_metric_deterministic(
    cmdp: &TabularCMDP,
    policy: &Policy,
    gamma: f64,
    eps_tol: f64,
) -> Result<ExactMetric, MetricError> {
    check_gamma(gamma)?;
    if eps_tol.is_nan() || eps_tol <= 0.0 {
        return Err(MetricError::Invalid(format!("eps_tol must be positive, got {eps_tol}")));
    }
    check_policy_shape(cmdp, policy)?;
    let n = cmdp.n_states();
    let mut next = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    for s in 0..n {
        let a = policy
            .action(s)
            .ok_or_else(|| MetricError::Invalid(format!("policy is stochastic at state {s}")))?;
        match cmdp.transition_row(s, a, 0)? {
            [(t, _)] => next.push(*t),
            _ => return Err(MetricError::Stochastic { state: s }),
        }
        reward.push(cmdp.reward(s, a, 0)?);
    }

    let cap = iteration_cap(gamma, eps_tol, reward_span(cmdp));
    let mut m = Array2::<f64>::zeros((n, n));
    let mut converged = false;
    let mut iterations = cap;
    for it in 1..=cap {
        let upd = Array2::from_shape_fn((n, n), |(i, j)| {
            (reward[i] - reward[j]).abs() + gamma * m[[next[i], next[j]]]
        });
        let change = upd.iter().zip(m.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        m = upd;
        if change <= eps_tol {
            converged = true;
            iterations = it;
            break;
        }
    }
    let raw = DistanceTable::from_raw(m);
    let table = raw.with_offset_normalized(DIAGONAL_OFFSET);
    Ok(ExactMetric { raw, table, converged, iterations })
}

/// `E[d(s, t)]` with `s ~ p0(. | c_i)` and `t ~ p0(. | c_j)` independent.
pub(crate) fn context_table(cmdp: &TabularCMDP, states: &DistanceTable) -> Result<DistanceTable, MetricError> {
    if states.len() != cmdp.n_states() {
        return Err(MetricError::Domain { table: states.len(), states: cmdp.n_states() });
    }
    if let Some(starts) = cmdp.context_states() {
        return Ok(states.restrict(starts));
    }
    let k = cmdp.n_contexts();
    let inits: Vec<Vec<(usize, f64)>> = (0..k)
        .map(|c| {
            let p = cmdp.initial_state(c)?;
            Ok(p.support(0.0).into_iter().map(|s| (s, p.weights()[s])).collect())
        })
        .collect::<Result<_, MetricError>>()?;
    let values = Array2::from_shape_fn((k, k), |(i, j)| {
        inits[i].iter().map(|&(s, p)| inits[j].iter().map(|&(t, q)| p * q * states.get(s, t)).sum::<f64>()).sum()
    });
    Ok(DistanceTable::from_raw(values))
}

/// Largest violation of `|V(s) - V(t)| <= d(s, t)` over all context pairs.
pub fn value_gap_violation(cmdp: &TabularCMDP, policy: &Policy, contexts: &DistanceTable) -> Result<f64, MetricError> {
    let sv = state_values(cmdp, policy)?;
    let starts = cmdp
        .context_states()
        .ok_or_else(|| MetricError::Invalid("contexts must be start states".into()))?;
    let mut worst = f64::NEG_INFINITY;
    for (i, &s) in starts.iter().enumerate() {
        for (j, &t) in starts.iter().enumerate() {
            worst = worst.max((sv.values[s] - sv.values[t]).abs() - contexts.get(i, j));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{maze_from_layout, MazeLayout, MazeParams, TabularBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> (TabularCMDP, Policy) {
        let layout: MazeLayout = "..G".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams { gamma: 0.9, ..MazeParams::default() }).unwrap();
        (m.cmdp().clone(), Policy::deterministic(&[3, 3, 3], 4).unwrap())
    }

    #[test]
    fn chain_fixed_point() {
        let (m, east) = chain();
        let res = pi_contextual_distance(&m, &east, 0.9, 1e-10).unwrap();
        assert!(res.converged);
        let d = &res.table;
        assert!((d.get(0, 1) - 1.0).abs() < 1e-9);
        assert!((d.get(0, 2) - 1.0).abs() < 1e-9);
        assert!(d.get(1, 2).abs() < 1e-12);
        let exact = exact_metric_deterministic(&m, &east, 0.9, 1e-10).unwrap();
        assert!(exact.raw.sup_distance(d) < 1e-9);
        assert_eq!(exact.table.get(0, 1), 1.0);
        assert_eq!(exact.table.get(0, 2), 1.0);
        assert_eq!(exact.table.get(1, 2), 0.0);
        assert!((exact.table.get(1, 1) - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn zero_discount_keeps_reward_gaps() {
        let (m, east) = chain();
        let d = bisim_operator(&DistanceTable::zeros(3), &m, &east, 0.0).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 2), 0.0);
    }

    #[test]
    fn single_state_is_all_zero() {
        let m = TabularBuilder::new(1, 2, 0.9).terminal(0).context_at(0).build().unwrap();
        let p = Policy::uniform(1, 2).unwrap();
        let res = pi_contextual_distance(&m, &p, 0.9, 1e-8).unwrap();
        assert_eq!(res.table.max(), 0.0);
    }

    #[test]
    fn wrong_table_size_rejected() {
        let (m, east) = chain();
        let err = bisim_operator(&DistanceTable::zeros(2), &m, &east, 0.9).unwrap_err();
        assert!(matches!(err, MetricError::Domain { table: 2, states: 3 }));
    }

    #[test]
    fn stochastic_dynamics_rejected_by_exact_dp() {
        let m = TabularBuilder::new(2, 1, 0.9)
            .transition(0, 0, vec![(0, 0.5), (1, 0.5)], -1.0)
            .terminal(1)
            .context_at(0)
            .build()
            .unwrap();
        let p = Policy::deterministic(&[0, 0], 1).unwrap();
        assert!(matches!(exact_metric_deterministic(&m, &p, 0.9, 1e-8), Err(MetricError::Stochastic { state: 0 })));
    }

    #[test]
    fn identical_rollouts_have_zero_distance() {
        // Two parallel corridors of equal length into one goal.
        let layout: MazeLayout = "..G..".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams::default()).unwrap();
        let opt = crate::learner::value_iteration(m.cmdp(), 1e-12).unwrap();
        let res = pi_contextual_distance(m.cmdp(), &opt.policy, 0.99, 1e-10).unwrap();
        let ctx = res.contexts(m.cmdp()).unwrap();
        // Contexts: cells 0, 1, 3, 4; cells 1 and 3 are both one step away.
        assert!(ctx.get(1, 2).abs() < 1e-12);
        assert!(ctx.get(0, 3).abs() < 1e-12);
        assert!(ctx.get(0, 1) > 0.5);
    }

    #[test]
    fn contraction_on_random_tables() {
        let layout: MazeLayout = "G.#..\n..#..\n.....".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams { gamma: 0.9, ..MazeParams::default() }).unwrap();
        let n = m.cmdp().n_states();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pol = Policy::random(n, 4, &mut rng).unwrap();
        let table = |rng: &mut ChaCha8Rng| {
            let mut a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 5.0);
            a = &a + &a.t();
            DistanceTable::new(a).unwrap()
        };
        for _ in 0..10 {
            let (d1, d2) = (table(&mut rng), table(&mut rng));
            let t1 = bisim_operator(&d1, m.cmdp(), &pol, 0.9).unwrap();
            let t2 = bisim_operator(&d2, m.cmdp(), &pol, 0.9).unwrap();
            assert!(t1.sup_distance(&t2) <= 0.9 * d1.sup_distance(&d2) + 1e-9);
        }
    }
}

use ndarray::Array2;

use super::CurriculumError;
use crate::envs::TabularCMDP;
use crate::learner::{state_values, value_iteration};
use crate::metrics::DistanceTable;
use crate::ot::{wasserstein_distance, Categorical, Ground, Solver, TaskDistribution};
use crate::policy::Policy;

/// Contexts at or below this stage mass do not count as trained on.
pub const AUDIT_SUPPORT_FLOOR: f64 = 1e-6;

/// Transfer between consecutive stages `k` and `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditRow {
    pub k: usize,
    pub alpha: f64,
    pub gap: f64,
    pub w: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Audit {
    pub rows: Vec<AuditRow>,
    /// Largest ratio over the rows.
    pub m_hat: f64,
    pub max_gap: f64,
}

fn start_states(cmdp: &TabularCMDP, context: usize) -> Result<Vec<(usize, f64)>, CurriculumError> {
    let p = cmdp.initial_state(context)?;
    Ok(p.support(0.0).into_iter().map(|s| (s, p.weights()[s])).collect())
}

/// Optimal actions on every state reachable under the optimal policy from
/// contexts with mass above `floor`; uniform actions elsewhere.
pub fn restricted_optimal_policy(
    cmdp: &TabularCMDP,
    optimal: &Policy,
    stage: &Categorical,
    floor: f64,
) -> Result<Policy, CurriculumError> {
    let n = cmdp.n_states();
    let mut reached = vec![false; n];
    let mut stack = Vec::new();
    for c in stage.support(floor) {
        for (s, _) in start_states(cmdp, c)? {
            if !reached[s] {
                reached[s] = true;
                stack.push(s);
            }
        }
    }
    while let Some(s) = stack.pop() {
        for a in 0..cmdp.n_actions() {
            if optimal.prob(s, a) == 0.0 {
                continue;
            }
            for &(t, p) in cmdp.transition_row(s, a, 0)? {
                if p > 0.0 && !reached[t] {
                    reached[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    let na = cmdp.n_actions();
    let probs = Array2::from_shape_fn((n, na), |(s, a)| if reached[s] { optimal.prob(s, a) } else { 1.0 / na as f64 });
    Ok(Policy::new(probs).map_err(crate::learner::LearnError::from)?)
}

fn value_of(cmdp: &TabularCMDP, values: &[f64], stage: &Categorical) -> Result<f64, CurriculumError> {
    let mut v = 0.0;
    for (c, &w) in stage.weights().iter().enumerate() {
        if w > 0.0 {
            v += w * start_states(cmdp, c)?.iter().map(|&(s, p)| p * values[s]).sum::<f64>();
        }
    }
    Ok(v)
}

/// Per consecutive stage pair: the value lost on `rho_{k+1}` by a policy
/// that is optimal only where `rho_k` leads, the transport distance between
/// the stages under `d_star` (context table), and their ratio.
pub fn transfer_gap_audit(
    cmdp: &TabularCMDP,
    stages: &[(f64, Categorical)],
    d_star: &DistanceTable,
    eps_tol: f64,
    floor: f64,
) -> Result<Audit, CurriculumError> {
    if !cmdp.is_homogeneous() {
        return Err(CurriculumError::Config("the audit needs context-independent dynamics and rewards".into()));
    }
    if d_star.len() != cmdp.n_contexts() {
        return Err(CurriculumError::Config(format!(
            "distance table covers {} contexts, model has {}",
            d_star.len(),
            cmdp.n_contexts()
        )));
    }
    let optimal = value_iteration(cmdp, eps_tol)?.policy;
    let policies = stages
        .iter()
        .map(|(_, rho)| {
            let p = restricted_optimal_policy(cmdp, &optimal, rho, floor)?;
            Ok(state_values(cmdp, &p)?.values)
        })
        .collect::<Result<Vec<_>, CurriculumError>>()?;

    let mut rows = Vec::new();
    for k in 0..stages.len().saturating_sub(1) {
        let next = &stages[k + 1].1;
        let gap = value_of(cmdp, &policies[k + 1], next)? - value_of(cmdp, &policies[k], next)?;
        let w = wasserstein_distance(
            &TaskDistribution::from(stages[k].1.clone()),
            &TaskDistribution::from(next.clone()),
            Ground::Indexed(d_star),
            &Solver::Exact,
        )?;
        rows.push(AuditRow { k, alpha: stages[k].0, gap, w, ratio: gap / w.max(1e-12) });
    }
    let m_hat = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(Audit { rows, m_hat, max_gap })
}

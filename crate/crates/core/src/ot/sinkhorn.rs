use ndarray::{Array1, Array2};

use super::{Categorical, CostMatrix, OtError};

/// Scaling vectors outside this band trigger the log-domain path.
pub(crate) const SCALING_MIN: f64 = 1e-100;
pub(crate) const SCALING_MAX: f64 = 1e100;

/// A transport plan and its cost `<plan, C>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    cost: f64,
}

impl Coupling {
    pub(crate) fn from_plan(plan: Array2<f64>, cost: &CostMatrix) -> Self {
        let total = (&plan * cost.entries()).sum();
        Self { plan, cost: total }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(0))
    }

    /// Largest absolute deviation of either marginal from the given weights.
    pub fn marginal_error(&self, src: &[f64], tgt: &[f64]) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let r = rows.iter().zip(src).map(|(x, w)| (x - w).abs()).fold(0.0, f64::max);
        let c = cols.iter().zip(tgt).map(|(x, w)| (x - w).abs()).fold(0.0, f64::max);
        r.max(c)
    }
}

/// Entropic regularization strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// Multiple of the largest ground cost of the instance.
    RelativeToMaxCost(f64),
}

impl Epsilon {
    pub fn resolve(&self, max_cost: f64) -> f64 {
        match *self {
            Epsilon::Absolute(e) => e,
            Epsilon::RelativeToMaxCost(r) => r * max_cost,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Epsilon::Absolute(e) | Epsilon::RelativeToMaxCost(e) => e,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    /// L1 marginal violation accepted at the final regularization level.
    pub tol: f64,
    /// Iteration cap per regularization level.
    pub max_iter: usize,
    pub debiased: bool,
    /// Geometric schedule `max(eps, max(C) * 0.5^k)` down to the target.
    pub anneal: bool,
    /// Switch to log-domain updates when a scaling vector leaves
    /// `[1e-100, 1e100]`; when disabled, underflow is an error.
    pub log_domain_fallback: bool,
    /// Project the final plan onto the exact marginals when the iterations
    /// stop short of `tol`. `converged` still reports the unprojected state.
    pub round: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: Epsilon::RelativeToMaxCost(1e-3),
            tol: 1e-9,
            max_iter: 10_000,
            debiased: false,
            anneal: true,
            log_domain_fallback: true,
            round: true,
        }
    }
}

impl SinkhornConfig {
    /// Defaults used for barycenters (debiased).
    pub fn barycenter() -> Self {
        Self { debiased: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), OtError> {
        let e = self.epsilon.value();
        if !(e > 0.0 && e.is_finite()) {
            return Err(OtError::InvalidConfig(format!("epsilon must be positive, got {e}")));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(OtError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(OtError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Regularization levels visited for an instance with the given max cost.
    pub(crate) fn schedule(&self, max_cost: f64) -> Vec<f64> {
        let target = self.epsilon.resolve(max_cost);
        let mut levels = Vec::new();
        if self.anneal {
            let mut e = max_cost;
            while e > target {
                levels.push(e);
                e *= 0.5;
            }
        }
        levels.push(target);
        levels
    }
}

/// Result of [`sinkhorn_plan`].
#[derive(Clone, Debug)]
pub struct SinkhornOutput {
    pub coupling: Coupling,
    /// Total iterations across all regularization levels.
    pub iterations: usize,
    /// L1 marginal violation of the returned plan (rows + columns).
    pub marginal_error: f64,
    pub converged: bool,
    /// Final regularization strength.
    pub epsilon: f64,
    pub log_domain: bool,
    /// `<P, C> + eps * KL(P | mu x nu)` at the final level.
    pub entropic_objective: f64,
}

/// Entropic optimal transport plan between `mu` and `nu`.
pub fn sinkhorn_plan(
    mu: &Categorical,
    nu: &Categorical,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput, OtError> {
    cfg.validate()?;
    let (n, m) = (mu.len(), nu.len());
    if cost.rows() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: cost.rows() });
    }
    if cost.cols() != m {
        return Err(OtError::DimensionMismatch { expected: m, got: cost.cols() });
    }

    // Zero-mass bins are dropped and reinserted as exact zeros.
    let rows = mu.support(0.0);
    let cols = nu.support(0.0);
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let sub = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cost.get(rows[i], cols[j]));

    let sol = solve(&a, &b, &sub, cfg)?;

    let mut plan = Array2::zeros((n, m));
    for (si, &i) in rows.iter().enumerate() {
        for (sj, &j) in cols.iter().enumerate() {
            plan[[i, j]] = sol.plan[[si, sj]];
        }
    }
    let coupling = Coupling::from_plan(plan, cost);
    Ok(SinkhornOutput {
        coupling,
        iterations: sol.iterations,
        marginal_error: sol.marginal_error,
        converged: sol.converged,
        epsilon: sol.epsilon,
        log_domain: sol.log_domain,
        entropic_objective: sol.objective,
    })
}

pub(crate) struct Solution {
    pub plan: Array2<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    pub epsilon: f64,
    pub log_domain: bool,
    pub objective: f64,
}

pub(crate) fn logsumexp<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let v: Vec<f64> = xs.collect();
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

fn in_range(v: &[f64]) -> bool {
    v.iter().all(|&x| (SCALING_MIN..=SCALING_MAX).contains(&x))
}

/// Sinkhorn on strictly positive marginals with annealing and log fallback.
pub(crate) fn solve(a: &[f64], b: &[f64], c: &Array2<f64>, cfg: &SinkhornConfig) -> Result<Solution, OtError> {
    let (n, m) = c.dim();
    let max_cost = c.iter().copied().fold(0.0, f64::max);
    if max_cost == 0.0 {
        let plan = Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j]);
        return Ok(Solution {
            plan,
            iterations: 0,
            marginal_error: 0.0,
            converged: true,
            epsilon: cfg.epsilon.resolve(1.0),
            log_domain: false,
            objective: 0.0,
        });
    }

    let levels = cfg.schedule(max_cost);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut log_domain = false;
    let mut iterations = 0;
    let mut converged = false;
    let last = levels.len() - 1;

    for (li, &eps) in levels.iter().enumerate() {
        let tol = if li == last { cfg.tol } else { cfg.tol.max(1e-5) };
        if !log_domain {
            match scaling_level(a, b, c, eps, &mut f, &mut g, tol, cfg.max_iter) {
                LevelResult::Done { iters, ok } => {
                    iterations += iters;
                    converged = ok;
                    continue;
                }
                LevelResult::OutOfRange { iters } => {
                    iterations += iters;
                    if !cfg.log_domain_fallback {
                        return Err(OtError::KernelUnderflow { epsilon: eps });
                    }
                    log_domain = true;
                }
            }
        }
        let (iters, _, ok) = log_level(a, b, c, eps, &mut f, &mut g, tol, cfg.max_iter);
        iterations += iters;
        converged = ok;
    }

    let eps = levels[last];
    let mut plan = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
    let raw_error = l1_marginal_error(&plan, a, b);
    converged = converged && raw_error <= cfg.tol.max(1e-12) * 2.0;
    if cfg.round && raw_error > cfg.tol {
        round_to_marginals(&mut plan, a, b);
    }
    let marginal_error = l1_marginal_error(&plan, a, b);
    let mut objective = 0.0;
    for ((i, j), &p) in plan.indexed_iter() {
        if p > 0.0 {
            objective += p * c[[i, j]] + eps * p * (p.ln() - a[i].ln() - b[j].ln());
        }
    }
    Ok(Solution {
        plan,
        iterations,
        marginal_error,
        converged,
        epsilon: eps,
        log_domain,
        objective,
    })
}

fn l1_marginal_error(plan: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let row: f64 = plan.rows().into_iter().zip(a).map(|(r, x)| (r.sum() - x).abs()).sum();
    let col: f64 = plan.columns().into_iter().zip(b).map(|(c, y)| (c.sum() - y).abs()).sum();
    row + col
}

/// Scale rows then columns down to their targets and spread the remaining
/// deficit as a rank-one correction; the result has marginals `a` and `b`.
fn round_to_marginals(plan: &mut Array2<f64>, a: &[f64], b: &[f64]) {
    for (mut row, &x) in plan.rows_mut().into_iter().zip(a) {
        let s = row.sum();
        if s > x {
            row *= x / s;
        }
    }
    for (mut col, &y) in plan.columns_mut().into_iter().zip(b) {
        let s = col.sum();
        if s > y {
            col *= y / s;
        }
    }
    let dr: Vec<f64> = plan.rows().into_iter().zip(a).map(|(r, x)| (x - r.sum()).max(0.0)).collect();
    let dc: Vec<f64> = plan.columns().into_iter().zip(b).map(|(c, y)| (y - c.sum()).max(0.0)).collect();
    let total: f64 = dr.iter().sum();
    if total > 0.0 {
        for ((i, j), p) in plan.indexed_iter_mut() {
            *p += dr[i] * dc[j] / total;
        }
    }
}

enum LevelResult {
    Done { iters: usize, ok: bool },
    OutOfRange { iters: usize },
}

#[allow(clippy::too_many_arguments)]
fn scaling_level(
    a: &[f64],
    b: &[f64],
    c: &Array2<f64>,
    eps: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> LevelResult {
    let (n, m) = c.dim();
    let k = c.mapv(|x| (-x / eps).exp());
    let mut u: Vec<f64> = f.iter().map(|x| (x / eps).exp()).collect();
    let mut v: Vec<f64> = g.iter().map(|x| (x / eps).exp()).collect();
    if !in_range(&u) || !in_range(&v) {
        return LevelResult::OutOfRange { iters: 0 };
    }
    let mut kv = vec![0.0; n];
    let mut ktu = vec![0.0; m];
    for it in 1..=max_iter {
        for i in 0..n {
            kv[i] = (0..m).map(|j| k[[i, j]] * v[j]).sum();
        }
        let new_u: Vec<f64> = (0..n).map(|i| a[i] / kv[i]).collect();
        for j in 0..m {
            ktu[j] = (0..n).map(|i| k[[i, j]] * new_u[i]).sum();
        }
        let new_v: Vec<f64> = (0..m).map(|j| b[j] / ktu[j]).collect();
        if !in_range(&new_u) || !in_range(&new_v) {
            // Keep the last in-range potentials for the log-domain restart.
            for i in 0..n {
                f[i] = eps * u[i].ln();
            }
            for j in 0..m {
                g[j] = eps * v[j].ln();
            }
            return LevelResult::OutOfRange { iters: it };
        }
        u = new_u;
        v = new_v;
        // Columns are exact after the v-update; measure the rows.
        let mut error = 0.0;
        for i in 0..n {
            let r: f64 = (0..m).map(|j| k[[i, j]] * v[j]).sum::<f64>() * u[i];
            error += (r - a[i]).abs();
        }
        if error <= tol || it == max_iter {
            for i in 0..n {
                f[i] = eps * u[i].ln();
            }
            for j in 0..m {
                g[j] = eps * v[j].ln();
            }
            return LevelResult::Done { iters: it, ok: error <= tol };
        }
    }
    unreachable!("max_iter >= 1 is validated")
}

#[allow(clippy::too_many_arguments)]
fn log_level(
    a: &[f64],
    b: &[f64],
    c: &Array2<f64>,
    eps: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> (usize, f64, bool) {
    let (n, m) = c.dim();
    let la: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut error = f64::INFINITY;
    for it in 1..=max_iter {
        for i in 0..n {
            f[i] = eps * la[i] - eps * logsumexp((0..m).map(|j| (g[j] - c[[i, j]]) / eps));
        }
        for j in 0..m {
            g[j] = eps * lb[j] - eps * logsumexp((0..n).map(|i| (f[i] - c[[i, j]]) / eps));
        }
        error = 0.0;
        for i in 0..n {
            let lr = f[i] / eps + logsumexp((0..m).map(|j| (g[j] - c[[i, j]]) / eps));
            error += (lr.exp() - a[i]).abs();
        }
        if error <= tol {
            return (it, error, true);
        }
    }
    (max_iter, error, false)
}

use ndarray::Array2;

use super::cost::build_cost_matrix;
use super::sinkhorn::{logsumexp, SCALING_MAX, SCALING_MIN};
use super::{
    exact_ot_lp, sinkhorn_plan, Categorical, ContextDistance, CostMatrix, OtError, Particles,
    SinkhornConfig, LP_MAX_ENTRIES,
};

/// Plan entries at or below this mass produce no interpolated particle.
pub const MASS_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct BarycenterOutput {
    pub barycenter: Categorical,
    pub iterations: usize,
    /// Summed L1 violation of the two input marginals at exit.
    pub marginal_error: f64,
    pub converged: bool,
    pub log_domain: bool,
}

fn check_alpha(alpha: f64) -> Result<(), OtError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(OtError::AlphaOutOfRange(alpha))
    }
}

/// Point on the entropic geodesic between `mu` and `nu` over one shared
/// support, minimizing `(1 - alpha) W(mu, rho) + alpha W(rho, nu)`.
///
/// With `cfg.debiased` the iteration carries the extra debiasing vector that
/// removes the entropic blur (without it, `alpha = 0` returns a smoothed
/// copy of `mu`).
pub fn barycenter_fixed_support(
    mu: &Categorical,
    nu: &Categorical,
    alpha: f64,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<BarycenterOutput, OtError> {
    check_alpha(alpha)?;
    cfg.validate()?;
    let n = mu.len();
    if nu.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: nu.len() });
    }
    if cost.rows() != n || cost.cols() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: cost.rows().max(cost.cols()) });
    }
    let c = cost.entries();
    let max_cost = cost.max();
    if max_cost == 0.0 {
        // Every point is equivalent; the geodesic is the linear path.
        return Ok(BarycenterOutput {
            barycenter: mu.mix(nu, alpha)?,
            iterations: 0,
            marginal_error: 0.0,
            converged: true,
            log_domain: false,
        });
    }

    let inputs = [
        Marginal::new(mu.weights(), 1.0 - alpha),
        Marginal::new(nu.weights(), alpha),
    ];
    let mut state = State::new(&inputs, n);
    let levels = cfg.schedule(max_cost);
    let last = levels.len() - 1;
    let mut iterations = 0;
    let mut log_domain = false;
    let mut converged = false;
    let mut error = f64::INFINITY;

    for (li, &eps) in levels.iter().enumerate() {
        let tol = if li == last { cfg.tol } else { cfg.tol.max(1e-5) };
        if !log_domain {
            match scaling_level(&inputs, c, eps, &mut state, tol, cfg.max_iter, cfg.debiased) {
                Level::Done { iters, err } => {
                    iterations += iters;
                    error = err;
                    converged = err <= tol;
                    continue;
                }
                Level::OutOfRange { iters } => {
                    iterations += iters;
                    if !cfg.log_domain_fallback {
                        return Err(OtError::KernelUnderflow { epsilon: eps });
                    }
                    log_domain = true;
                }
            }
        }
        let (iters, err) = log_level(&inputs, c, eps, &mut state, tol, cfg.max_iter, cfg.debiased);
        iterations += iters;
        error = err;
        converged = err <= tol;
    }

    let rho: Vec<f64> = state.log_rho.iter().map(|x| x.exp()).collect();
    Ok(BarycenterOutput {
        barycenter: Categorical::normalized(rho)?,
        iterations,
        marginal_error: error,
        converged,
        log_domain,
    })
}

struct Marginal {
    /// Active (positive-mass) indices and their log-weights.
    active: Vec<usize>,
    log_w: Vec<f64>,
    w: Vec<f64>,
    weight: f64,
}

impl Marginal {
    fn new(weights: &[f64], weight: f64) -> Self {
        let active: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        let w: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
        let log_w = w.iter().map(|x| x.ln()).collect();
        Self { active, log_w, w, weight }
    }
}

/// Dual potentials in `eps * ln(scaling)` units so they survive a change of
/// regularization level.
struct State {
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
    log_rho: Vec<f64>,
}

impl State {
    fn new(inputs: &[Marginal], n: usize) -> Self {
        Self {
            f: inputs.iter().map(|m| vec![0.0; m.active.len()]).collect(),
            g: inputs.iter().map(|_| vec![0.0; n]).collect(),
            h: vec![0.0; n],
            log_rho: vec![-(n as f64).ln(); n],
        }
    }
}

enum Level {
    Done { iters: usize, err: f64 },
    OutOfRange { iters: usize },
}

fn in_range(v: &[f64]) -> bool {
    v.iter().all(|&x| (SCALING_MIN..=SCALING_MAX).contains(&x))
}

fn scaling_level(
    inputs: &[Marginal],
    c: &Array2<f64>,
    eps: f64,
    state: &mut State,
    tol: f64,
    max_iter: usize,
    debiased: bool,
) -> Level {
    let n = c.nrows();
    let k = c.mapv(|x| (-x / eps).exp());
    let to_scaling = |p: &[f64]| -> Vec<f64> { p.iter().map(|x| (x / eps).exp()).collect() };
    let mut a: Vec<Vec<f64>> = state.f.iter().map(|f| to_scaling(f)).collect();
    let mut b: Vec<Vec<f64>> = state.g.iter().map(|g| to_scaling(g)).collect();
    let mut d = to_scaling(&state.h);
    if !a.iter().chain(b.iter()).all(|v| in_range(v)) || !in_range(&d) {
        return Level::OutOfRange { iters: 0 };
    }
    let save = |state: &mut State, a: &[Vec<f64>], b: &[Vec<f64>], d: &[f64]| {
        for (f, a) in state.f.iter_mut().zip(a) {
            f.iter_mut().zip(a).for_each(|(f, a)| *f = eps * a.ln());
        }
        for (g, b) in state.g.iter_mut().zip(b) {
            g.iter_mut().zip(b).for_each(|(g, b)| *g = eps * b.ln());
        }
        state.h.iter_mut().zip(d).for_each(|(h, d)| *h = eps * d.ln());
    };

    let mut err = f64::INFINITY;
    for it in 1..=max_iter {
        let mut new_a = Vec::with_capacity(inputs.len());
        err = 0.0;
        for (m, input) in inputs.iter().enumerate() {
            let mut am = Vec::with_capacity(input.active.len());
            for (s, &i) in input.active.iter().enumerate() {
                let kb: f64 = (0..n).map(|j| k[[i, j]] * b[m][j]).sum();
                // Row marginal of the current plan before the update.
                err += (a[m][s] * kb - input.w[s]).abs();
                am.push(input.w[s] / kb);
            }
            new_a.push(am);
        }
        let kta: Vec<Vec<f64>> = inputs
            .iter()
            .zip(&new_a)
            .map(|(input, am)| {
                (0..n)
                    .map(|j| input.active.iter().zip(am).map(|(&i, a)| k[[i, j]] * a).sum())
                    .collect()
            })
            .collect();
        let mut rho = vec![0.0; n];
        for j in 0..n {
            let mut r = if debiased { d[j] } else { 1.0 };
            for (input, kt) in inputs.iter().zip(&kta) {
                r *= kt[j].powf(input.weight);
            }
            rho[j] = r;
        }
        let new_b: Vec<Vec<f64>> = kta.iter().map(|kt| (0..n).map(|j| rho[j] / kt[j]).collect()).collect();
        let new_d: Vec<f64> = if debiased {
            (0..n)
                .map(|j| {
                    let kd: f64 = (0..n).map(|l| k[[j, l]] * d[l]).sum();
                    (d[j] * rho[j] / kd).sqrt()
                })
                .collect()
        } else {
            d.clone()
        };
        let ok = new_a.iter().chain(new_b.iter()).all(|v| in_range(v))
            && in_range(&new_d)
            && rho.iter().all(|&r| r > 0.0 && r.is_finite());
        if !ok {
            save(state, &a, &b, &d);
            return Level::OutOfRange { iters: it };
        }
        a = new_a;
        b = new_b;
        d = new_d;
        state.log_rho = rho.iter().map(|r| r.ln()).collect();
        if it > 1 && err <= tol || it == max_iter {
            save(state, &a, &b, &d);
            return Level::Done { iters: it, err };
        }
    }
    save(state, &a, &b, &d);
    Level::Done { iters: max_iter, err }
}

fn log_level(
    inputs: &[Marginal],
    c: &Array2<f64>,
    eps: f64,
    state: &mut State,
    tol: f64,
    max_iter: usize,
    debiased: bool,
) -> (usize, f64) {
    let n = c.nrows();
    let mut err = f64::INFINITY;
    let mut log_kta = vec![vec![0.0; n]; inputs.len()];
    for it in 1..=max_iter {
        err = 0.0;
        for (m, input) in inputs.iter().enumerate() {
            for (s, &i) in input.active.iter().enumerate() {
                let lkb = logsumexp((0..n).map(|j| (state.g[m][j] - c[[i, j]]) / eps));
                let old = state.f[m][s];
                // Row sum before the update is w * exp((f_old - f_new) / eps).
                let new = eps * (input.log_w[s] - lkb);
                err += input.w[s] * ((old - new) / eps).exp_m1().abs();
                state.f[m][s] = new;
            }
            for j in 0..n {
                log_kta[m][j] = logsumexp(
                    input.active.iter().zip(&state.f[m]).map(|(&i, f)| (f - c[[i, j]]) / eps),
                );
            }
        }
        for j in 0..n {
            let mut lr = if debiased { state.h[j] / eps } else { 0.0 };
            for (input, lk) in inputs.iter().zip(&log_kta) {
                if input.weight > 0.0 {
                    lr += input.weight * lk[j];
                }
            }
            state.log_rho[j] = lr;
        }
        for (g, lk) in state.g.iter_mut().zip(&log_kta) {
            for j in 0..n {
                g[j] = eps * (state.log_rho[j] - lk[j]);
            }
        }
        if debiased {
            let h_old = state.h.clone();
            for j in 0..n {
                let lkd = logsumexp((0..n).map(|l| (h_old[l] - c[[j, l]]) / eps));
                state.h[j] = 0.5 * (h_old[j] + eps * (state.log_rho[j] - lkd));
            }
        }
        if it > 1 && err <= tol {
            return (it, err);
        }
    }
    (max_iter, err)
}

/// McCann displacement interpolation between two particle clouds.
///
/// The optimal plan is exact when `n_s * n_t` fits the LP cap, entropic
/// otherwise; every plan entry above [`MASS_FLOOR`] becomes one particle at
/// `(1 - alpha) * x_i + alpha * y_j` carrying the entry's mass.
pub fn barycenter_free_support<D>(
    src: &Particles,
    tgt: &Particles,
    alpha: f64,
    metric: &D,
) -> Result<Particles, OtError>
where
    D: ContextDistance<[f64]> + ?Sized,
{
    check_alpha(alpha)?;
    if src.dim() != tgt.dim() {
        return Err(OtError::DimensionMismatch { expected: src.dim(), got: tgt.dim() });
    }
    let cost = build_cost_matrix::<[f64], Vec<f64>, D>(src.points(), tgt.points(), metric)?;
    let mu = Categorical::new(src.weights().to_vec())?;
    let nu = Categorical::new(tgt.weights().to_vec())?;
    let plan = if src.len() * tgt.len() <= LP_MAX_ENTRIES {
        exact_ot_lp(&mu, &nu, &cost)?
    } else {
        sinkhorn_plan(&mu, &nu, &cost, &SinkhornConfig::default())?.coupling
    };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for ((i, j), &mass) in plan.plan().indexed_iter() {
        if mass > MASS_FLOOR {
            let p = src.points()[i]
                .iter()
                .zip(&tgt.points()[j])
                .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
                .collect();
            points.push(p);
            weights.push(mass);
        }
    }
    Particles::normalized(points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::SquaredL2;

    fn sq_line(n: usize) -> CostMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| ((i as f64) - (j as f64)).powi(2)).collect())
            .collect();
        CostMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn endpoints_reproduce_inputs() {
        let c = sq_line(5);
        let mu = Categorical::new(vec![0.5, 0.3, 0.2, 0.0, 0.0]).unwrap();
        let nu = Categorical::new(vec![0.0, 0.0, 0.1, 0.2, 0.7]).unwrap();
        let cfg = SinkhornConfig::barycenter();
        let at0 = barycenter_fixed_support(&mu, &nu, 0.0, &c, &cfg).unwrap();
        let at1 = barycenter_fixed_support(&mu, &nu, 1.0, &c, &cfg).unwrap();
        assert!(at0.barycenter.tv_distance(&mu) <= 1e-4, "{:?}", at0.barycenter);
        assert!(at1.barycenter.tv_distance(&nu) <= 1e-4, "{:?}", at1.barycenter);
    }

    #[test]
    fn dirac_midpoint() {
        let c = sq_line(3);
        let mu = Categorical::dirac(3, 0).unwrap();
        let nu = Categorical::dirac(3, 2).unwrap();
        let out = barycenter_fixed_support(&mu, &nu, 0.5, &c, &SinkhornConfig::barycenter()).unwrap();
        assert!(out.barycenter.weights()[1] >= 0.95, "{:?}", out.barycenter);
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let c = sq_line(2);
        let mu = Categorical::uniform(2).unwrap();
        let err = barycenter_fixed_support(&mu, &mu, 1.5, &c, &SinkhornConfig::barycenter()).unwrap_err();
        assert_eq!(err, OtError::AlphaOutOfRange(1.5));
    }

    #[test]
    fn identical_marginals_stay_put() {
        let c = sq_line(4);
        let mu = Categorical::new(vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        let out = barycenter_fixed_support(&mu, &mu, 0.3, &c, &SinkhornConfig::barycenter()).unwrap();
        assert!(out.barycenter.tv_distance(&mu) <= 1e-4);
    }

    #[test]
    fn free_support_midpoint_of_diracs() {
        let a = Particles::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let b = Particles::uniform(vec![vec![2.0, 0.0]]).unwrap();
        let mid = barycenter_free_support(&a, &b, 0.5, &SquaredL2).unwrap();
        assert_eq!(mid.points(), &[vec![1.0, 0.0]]);
        assert_eq!(mid.weights(), &[1.0]);
    }

    #[test]
    fn free_support_dimension_mismatch() {
        let a = Particles::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let b = Particles::uniform(vec![vec![2.0]]).unwrap();
        assert!(barycenter_free_support(&a, &b, 0.5, &SquaredL2).is_err());
    }
}

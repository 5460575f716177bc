use super::cost::{build_cost_matrix, build_index_cost};
use super::sinkhorn::solve;
use super::{
    exact_ot_lp, sinkhorn_plan, Categorical, ContextDistance, CostMatrix, OtError, SinkhornConfig,
    TaskDistribution,
};

/// Ground metric matching the representation of the distributions.
#[derive(Clone, Copy)]
pub enum Ground<'a> {
    /// Distance between context indices of a discrete context set.
    Indexed(&'a dyn ContextDistance<usize>),
    /// Distance between coordinate vectors.
    Points(&'a dyn ContextDistance<[f64]>),
}

#[derive(Clone, Copy, Debug)]
pub enum Solver {
    Exact,
    /// Raw entropic cost `<P, C>`, or the Sinkhorn divergence
    /// `OT(mu, nu) - (OT(mu, mu) + OT(nu, nu)) / 2` on entropic objectives
    /// when `debiased` is set.
    Entropic(SinkhornConfig),
}

/// Transport cost between two task distributions under `ground`.
pub fn wasserstein_distance(
    mu: &TaskDistribution,
    nu: &TaskDistribution,
    ground: Ground<'_>,
    solver: &Solver,
) -> Result<f64, OtError> {
    match (mu, nu, ground) {
        (TaskDistribution::Categorical(a), TaskDistribution::Categorical(b), Ground::Indexed(d)) => {
            let src: Vec<usize> = (0..a.len()).collect();
            let tgt: Vec<usize> = (0..b.len()).collect();
            let cost = |x: &[usize], y: &[usize]| build_index_cost(x, y, d);
            transport(a, b, &src, &tgt, cost, solver)
        }
        (TaskDistribution::Particles(a), TaskDistribution::Particles(b), Ground::Points(d)) => {
            if a.dim() != b.dim() {
                return Err(OtError::DimensionMismatch { expected: a.dim(), got: b.dim() });
            }
            let wa = Categorical::new(a.weights().to_vec())?;
            let wb = Categorical::new(b.weights().to_vec())?;
            let src: Vec<&[f64]> = a.points().iter().map(Vec::as_slice).collect();
            let tgt: Vec<&[f64]> = b.points().iter().map(Vec::as_slice).collect();
            let cost = |x: &[&[f64]], y: &[&[f64]]| build_cost_matrix::<[f64], &[f64], _>(x, y, d);
            transport(&wa, &wb, &src, &tgt, cost, solver)
        }
        (mu, nu, ground) => {
            let g = match ground {
                Ground::Indexed(_) => "indexed",
                Ground::Points(_) => "points",
            };
            Err(OtError::MixedKinds(format!("{} vs {} under a {g} ground metric", mu.kind(), nu.kind())))
        }
    }
}

fn transport<T, F>(
    a: &Categorical,
    b: &Categorical,
    src: &[T],
    tgt: &[T],
    cost: F,
    solver: &Solver,
) -> Result<f64, OtError>
where
    F: Fn(&[T], &[T]) -> Result<CostMatrix, OtError>,
{
    match solver {
        Solver::Exact => Ok(exact_ot_lp(a, b, &cost(src, tgt)?)?.cost()),
        Solver::Entropic(cfg) if !cfg.debiased => Ok(sinkhorn_plan(a, b, &cost(src, tgt)?, cfg)?.coupling.cost()),
        Solver::Entropic(cfg) => {
            // All three terms share the regularization of the cross term.
            let cross = cost(src, tgt)?;
            let eps = cfg.epsilon.resolve(cross.max());
            let fixed = SinkhornConfig { epsilon: super::Epsilon::Absolute(eps.max(f64::MIN_POSITIVE)), ..*cfg };
            let ab = entropic(a, b, &cross, &fixed)?;
            let aa = entropic(a, a, &cost(src, src)?, &fixed)?;
            let bb = entropic(b, b, &cost(tgt, tgt)?, &fixed)?;
            Ok((ab - 0.5 * (aa + bb)).max(0.0))
        }
    }
}

fn entropic(a: &Categorical, b: &Categorical, cost: &CostMatrix, cfg: &SinkhornConfig) -> Result<f64, OtError> {
    let rows = a.support(0.0);
    let cols = b.support(0.0);
    let wa: Vec<f64> = rows.iter().map(|&i| a.weights()[i]).collect();
    let wb: Vec<f64> = cols.iter().map(|&j| b.weights()[j]).collect();
    let sub = ndarray::Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cost.get(rows[i], cols[j]));
    Ok(solve(&wa, &wb, &sub, cfg)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{FnDistance, Particles, SquaredL2};

    fn line(a: &usize, b: &usize) -> f64 {
        (*a as f64 - *b as f64).abs()
    }

    #[test]
    fn self_distance_is_zero() {
        let mu: TaskDistribution = Categorical::new(vec![0.2, 0.3, 0.5]).unwrap().into();
        let d = FnDistance(line);
        let w = wasserstein_distance(&mu, &mu, Ground::Indexed(&d), &Solver::Exact).unwrap();
        assert_eq!(w, 0.0);
        let debiased = SinkhornConfig { debiased: true, ..SinkhornConfig::default() };
        let w = wasserstein_distance(&mu, &mu, Ground::Indexed(&d), &Solver::Entropic(debiased)).unwrap();
        assert!(w <= 1e-8);
    }

    #[test]
    fn diracs_at_distance_three() {
        let l2 = FnDistance(|a: &[f64], b: &[f64]| (a[0] - b[0]).abs());
        let a: TaskDistribution = Particles::uniform(vec![vec![0.0]]).unwrap().into();
        let b: TaskDistribution = Particles::uniform(vec![vec![3.0]]).unwrap().into();
        assert_eq!(wasserstein_distance(&a, &b, Ground::Points(&l2), &Solver::Exact).unwrap(), 3.0);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let a: TaskDistribution = Particles::uniform(vec![vec![0.0]]).unwrap().into();
        let b: TaskDistribution = Categorical::uniform(1).unwrap().into();
        let err = wasserstein_distance(&a, &b, Ground::Points(&SquaredL2), &Solver::Exact).unwrap_err();
        assert!(matches!(err, OtError::MixedKinds(_)));
    }
}

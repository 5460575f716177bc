use geocurr_core::ot::{
    barycenter_fixed_support, barycenter_free_support, build_cost_matrix, exact_ot_lp, sinkhorn_plan,
    wasserstein_distance, Categorical, CostMatrix, FnDistance, Ground, Particles, SinkhornConfig, Solver,
    SquaredL2, TaskDistribution,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Categorical {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    Categorical::normalized(w).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>() * 4.0).collect()).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Uniform-to-uniform transport with equal counts has a permutation optimum.
#[test]
fn lp_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=6 {
        for _ in 0..5 {
            let src = random_points(&mut rng, n, 2);
            let tgt = random_points(&mut rng, n, 2);
            let cost = build_cost_matrix(&src, &tgt, &SquaredL2).unwrap();
            let brute = permutations(n)
                .iter()
                .map(|p| (0..n).map(|i| cost.get(i, p[i])).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min);
            let w = Categorical::uniform(n).unwrap();
            let lp = exact_ot_lp(&w, &w, &cost).unwrap();
            assert!((lp.cost() - brute).abs() < 1e-12, "n={n}: {} vs {brute}", lp.cost());
        }
    }
}

#[test]
fn sinkhorn_within_one_percent_of_lp_4x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let src = random_points(&mut rng, 4, 2);
    let tgt = random_points(&mut rng, 4, 2);
    let cost = build_cost_matrix(&src, &tgt, &SquaredL2).unwrap();
    let mu = random_weights(&mut rng, 4);
    let nu = random_weights(&mut rng, 4);
    let lp = exact_ot_lp(&mu, &nu, &cost).unwrap().cost();
    let sk = sinkhorn_plan(&mu, &nu, &cost, &SinkhornConfig::default()).unwrap();
    assert!(sk.converged);
    assert!((sk.coupling.cost() - lp).abs() / lp.max(1e-12) <= 0.01);
}

/// Brute-force minimization of `(1 - a) W(mu, rho) + a W(rho, nu)` over a
/// simplex grid on three points, every term solved by the exact LP.
#[test]
fn dirac_midpoint_matches_simplex_grid_oracle() {
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| ((i as f64) - (j as f64)).powi(2)).collect())
        .collect();
    let cost = CostMatrix::from_rows(&rows).unwrap();
    let mu = Categorical::dirac(3, 0).unwrap();
    let nu = Categorical::dirac(3, 2).unwrap();
    let alpha = 0.5;

    let steps = 50;
    let mut best = (f64::INFINITY, vec![]);
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let w = vec![i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
            let rho = Categorical::normalized(w.clone()).unwrap();
            let obj = (1.0 - alpha) * exact_ot_lp(&mu, &rho, &cost).unwrap().cost()
                + alpha * exact_ot_lp(&rho, &nu, &cost).unwrap().cost();
            if obj < best.0 - 1e-12 {
                best = (obj, w);
            }
        }
    }
    assert_eq!(best.1, vec![0.0, 1.0, 0.0]);

    let bary = barycenter_fixed_support(&mu, &nu, alpha, &cost, &SinkhornConfig::barycenter()).unwrap();
    assert!(bary.barycenter.weights()[1] >= 0.95);
}

#[test]
fn free_support_identity_matching() {
    let src = Particles::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let tgt = Particles::uniform(vec![vec![0.0, 2.0], vec![1.0, 2.0]]).unwrap();
    // Enumerate both permutation couplings: identity costs 4, swap costs 5.
    let cost = build_cost_matrix(src.points(), tgt.points(), &SquaredL2).unwrap();
    assert!(cost.get(0, 0) + cost.get(1, 1) < cost.get(0, 1) + cost.get(1, 0));

    let mid = barycenter_free_support(&src, &tgt, 0.5, &SquaredL2).unwrap().consolidate(1e-12);
    assert_eq!(mid.points(), &[vec![0.0, 1.0], vec![1.0, 1.0]]);
    assert_eq!(mid.weights(), &[0.5, 0.5]);
}

#[test]
fn free_support_alpha_zero_is_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = Particles::uniform(random_points(&mut rng, 6, 2)).unwrap();
    let tgt = Particles::uniform(random_points(&mut rng, 4, 2)).unwrap();
    let at0 = barycenter_free_support(&src, &tgt, 0.0, &SquaredL2).unwrap().consolidate(1e-12);
    assert_eq!(at0.len(), src.len());
    for (p, w) in at0.points().iter().zip(at0.weights()) {
        let k = src.points().iter().position(|q| q == p).expect("particle from the source");
        assert!((w - src.weights()[k]).abs() < 1e-12);
    }
}

#[test]
fn particle_clouds_exact_vs_entropic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a: TaskDistribution = Particles::uniform(random_points(&mut rng, 5, 2)).unwrap().into();
    let b: TaskDistribution = Particles::uniform(random_points(&mut rng, 5, 2)).unwrap().into();
    let exact = wasserstein_distance(&a, &b, Ground::Points(&SquaredL2), &Solver::Exact).unwrap();
    let ent = wasserstein_distance(&a, &b, Ground::Points(&SquaredL2), &Solver::Entropic(SinkhornConfig::default()))
        .unwrap();
    assert!((exact - ent).abs() / exact <= 0.01, "{exact} vs {ent}");
}

fn w2(a: &Particles, b: &Particles) -> f64 {
    let a: TaskDistribution = a.clone().into();
    let b: TaskDistribution = b.clone().into();
    wasserstein_distance(&a, &b, Ground::Points(&SquaredL2), &Solver::Exact).unwrap().sqrt()
}

#[test]
fn displacement_interpolation_has_constant_speed() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mu = Particles::uniform(random_points(&mut rng, 7, 2)).unwrap();
    let nu = Particles::uniform(random_points(&mut rng, 5, 2)).unwrap();
    let total = w2(&mu, &nu);
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let path: Vec<Particles> =
        grid.iter().map(|&a| barycenter_free_support(&mu, &nu, a, &SquaredL2).unwrap()).collect();
    for (i, a) in grid.iter().enumerate() {
        for (j, b) in grid.iter().enumerate().skip(i + 1) {
            let expect = (b - a) * total;
            let got = w2(&path[i], &path[j]);
            assert!((got - expect).abs() <= 0.02 * expect, "{a}->{b}: {got} vs {expect}");
        }
    }
}

fn line_metric(a: &usize, b: &usize) -> f64 {
    (*a as f64 - *b as f64).abs()
}

fn weights_strategy(n: usize) -> impl Strategy<Value = Categorical> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| {
        if w.iter().sum::<f64>() > 1e-3 {
            Categorical::normalized(w).ok()
        } else {
            None
        }
    })
}

fn pair_strategy() -> impl Strategy<Value = (Categorical, Categorical, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(n, m)| {
        (
            weights_strategy(n),
            weights_strategy(m),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn couplings_are_feasible_and_near_lp((mu, nu, xs, ys) in pair_strategy()) {
        let cost = build_cost_matrix(&xs, &ys, &SquaredL2).unwrap();
        let lp = exact_ot_lp(&mu, &nu, &cost).unwrap();
        prop_assert!(lp.marginal_error(mu.weights(), nu.weights()) <= 1e-6);
        prop_assert!(lp.plan().iter().all(|&p| p >= 0.0));
        let sk = sinkhorn_plan(&mu, &nu, &cost, &SinkhornConfig::default()).unwrap();
        prop_assert!(sk.coupling.marginal_error(mu.weights(), nu.weights()) <= 1e-6);
        prop_assert!(sk.coupling.plan().iter().all(|&p| p >= 0.0));
        let rel = (sk.coupling.cost() - lp.cost()).abs() / lp.cost().max(1e-12);
        prop_assert!(rel <= 0.01 || (sk.coupling.cost() - lp.cost()).abs() <= 1e-9, "rel {}", rel);
    }

    #[test]
    fn exact_distance_symmetric_and_triangular(
        a in weights_strategy(6), b in weights_strategy(6), c in weights_strategy(6)
    ) {
        let d = FnDistance(line_metric);
        let w = |x: &Categorical, y: &Categorical| {
            wasserstein_distance(&x.clone().into(), &y.clone().into(), Ground::Indexed(&d), &Solver::Exact).unwrap()
        };
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-9);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-9);
    }

    #[test]
    fn entropic_distance_symmetric(a in weights_strategy(5), b in weights_strategy(5)) {
        let d = FnDistance(line_metric);
        let cfg = Solver::Entropic(SinkhornConfig::default());
        let ab = wasserstein_distance(&a.clone().into(), &b.clone().into(), Ground::Indexed(&d), &cfg).unwrap();
        let ba = wasserstein_distance(&b.into(), &a.into(), Ground::Indexed(&d), &cfg).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-6);
    }

    #[test]
    fn debiased_self_distance_vanishes(a in weights_strategy(7)) {
        let d = FnDistance(line_metric);
        let cfg = Solver::Entropic(SinkhornConfig { debiased: true, ..SinkhornConfig::default() });
        let t: TaskDistribution = a.into();
        prop_assert!(wasserstein_distance(&t, &t, Ground::Indexed(&d), &cfg).unwrap() <= 1e-8);
    }
}

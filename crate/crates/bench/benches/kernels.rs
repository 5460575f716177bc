use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geocurr_core::embed::{embed_grad, Architecture, MlpParams};
use geocurr_core::envs::{maze_from_layout, MazeParams};
use geocurr_core::learner::value_iteration;
use geocurr_core::metrics::{bisim_operator, pi_contextual_distance, DistanceTable};
use geocurr_core::ot::{
    barycenter_fixed_support, barycenter_free_support, sinkhorn_plan, Categorical, CostMatrix, Particles,
    SinkhornConfig, SquaredL2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAZE: &str = include_str!("../../../layouts/maze11.txt");

fn random_categorical(n: usize, rng: &mut ChaCha8Rng) -> Categorical {
    Categorical::normalized((0..n).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap()
}

fn line_cost(n: usize) -> CostMatrix {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| ((i as f64 - j as f64) / n as f64).powi(2)).collect()).collect();
    CostMatrix::from_rows(&rows).unwrap()
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn_plan");
    group.sample_size(10);
    for n in [12, 51, 100] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let (mu, nu) = (random_categorical(n, &mut rng), random_categorical(n, &mut rng));
        let cost = line_cost(n);
        let cfg = SinkhornConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| sinkhorn_plan(black_box(&mu), black_box(&nu), &cost, &cfg).unwrap())
        });
    }
    group.finish();
}

fn barycenters(c: &mut Criterion) {
    let n = 51;
    let mu = Categorical::uniform_on(n, &[0, 1, 2]).unwrap();
    let nu = Categorical::uniform_on(n, &[48, 49, 50]).unwrap();
    let cost = line_cost(n);
    let cfg = SinkhornConfig::barycenter();
    c.bench_function("barycenter_fixed_support/51", |b| {
        b.iter(|| barycenter_fixed_support(black_box(&mu), black_box(&nu), 0.5, &cost, &cfg).unwrap())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cloud = |shift: f64| {
        let pts = (0..64).map(|_| vec![rng.random::<f64>() + shift, rng.random::<f64>()]).collect();
        Particles::uniform(pts).unwrap()
    };
    let (src, tgt) = (cloud(0.0), cloud(5.0));
    c.bench_function("barycenter_free_support/64", |b| {
        b.iter(|| barycenter_free_support(black_box(&src), black_box(&tgt), 0.5, &SquaredL2).unwrap())
    });
}

fn bisimulation(c: &mut Criterion) {
    let maze = maze_from_layout(&MAZE.parse().unwrap(), &MazeParams::default()).unwrap();
    let cmdp = maze.cmdp();
    let policy = value_iteration(cmdp, 1e-10).unwrap().policy;
    let d = DistanceTable::zeros(cmdp.n_states());
    c.bench_function("bisim_operator/maze11", |b| {
        b.iter(|| bisim_operator(black_box(&d), cmdp, &policy, cmdp.gamma()).unwrap())
    });
    let mut group = c.benchmark_group("pi_contextual_distance");
    group.sample_size(10);
    group.bench_function("maze11", |b| {
        b.iter(|| pi_contextual_distance(cmdp, &policy, cmdp.gamma(), 1e-6).unwrap())
    });
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arch = Architecture::standard(2);
    let params = MlpParams::init(&arch, &mut rng).unwrap();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..32)
        .map(|_| {
            let mut p = || vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (p(), p())
        })
        .collect();
    let d: Vec<f64> = (0..32).map(|_| rng.random()).collect();
    c.bench_function("embed_grad/batch32", |b| {
        b.iter(|| embed_grad(black_box(&params), &pairs, &d, 1.0).unwrap())
    });
}

criterion_group!(benches, sinkhorn, barycenters, bisimulation, embedding);
criterion_main!(benches);

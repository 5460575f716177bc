use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use geocurr_core::curriculum::{
    run_curriculum, time_to_threshold, BaselineKind, BaselineSchedule, CurriculumConfig, CurriculumTrace,
    CurvePoint, EmbeddedConfig, EmbeddedSchedule, GeodesicSchedule, MetricChoice, StageSchedule, TargetEvaluator,
};
use geocurr_core::embed::{Architecture, EmbedTrainConfig};
use geocurr_core::envs::{rollout, EpisodicEnv, GoalField, Maze};
use geocurr_core::io::{
    maze_heatmap, write_curve, write_distribution, write_embed_report, write_params, write_stage_summary,
    write_trajectory, IoError,
};
use geocurr_core::learner::{EpsilonSchedule, EpsilonScope, LearnerConfig, QLearner};
use geocurr_core::metrics::{l2_surrogate, reward_gap_surrogate, DistanceTable};
use geocurr_core::ot::{ContextDistance, Ground, SinkhornConfig, TaskDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method, MetricSpec, ScopeSpec};
use crate::world::{maze_ground_table, World};
use crate::CliError;

/// Pixels per maze cell in stage heatmaps.
pub const HEATMAP_SCALE: usize = 8;

/// One finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub method: Method,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub time_to_threshold: Option<u64>,
    pub completed: bool,
    /// Artifact paths relative to the output directory.
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub runs: Vec<SeedRun>,
    pub failures: Vec<RunFailure>,
    pub manifest: PathBuf,
}

/// Inputs shared by every run of one experiment.
struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    world: &'a World,
    mu: TaskDistribution,
    nu: TaskDistribution,
    uniform: TaskDistribution,
    table: Option<DistanceTable>,
    points: Option<Box<dyn ContextDistance<[f64]> + 'a>>,
}

impl Shared<'_> {
    fn ground(&self) -> Ground<'_> {
        match (&self.table, &self.points) {
            (Some(t), _) => Ground::Indexed(t),
            (None, Some(p)) => Ground::Points(p.as_ref()),
            (None, None) => unreachable!("one ground metric is always built"),
        }
    }

    fn max_steps(&self) -> usize {
        self.cfg.learner.max_episode_steps.unwrap_or_else(|| self.world.default_max_steps())
    }
}

fn field_metric<'a>(field: &'a GoalField, metric: MetricSpec) -> Box<dyn ContextDistance<[f64]> + 'a> {
    match metric {
        MetricSpec::RewardGap => Box::new(reward_gap_surrogate(move |c: &[f64]| match field.shortest_steps(c) {
            Ok(Some(n)) => -(n as f64),
            Ok(None) => -(field.max_steps() as f64),
            Err(_) => f64::NAN,
        })),
        _ => Box::new(l2_surrogate(2)),
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_with<F>(root: &Path, rel: PathBuf, files: &mut Vec<PathBuf>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), IoError>,
{
    let mut w = create(&root.join(&rel))?;
    f(&mut w)?;
    w.flush()?;
    files.push(rel);
    Ok(())
}

fn learner_config(cfg: &ExperimentConfig, max_steps: usize) -> LearnerConfig {
    let l = &cfg.learner;
    LearnerConfig {
        learning_rate: l.learning_rate,
        epsilon: EpsilonSchedule { start: l.epsilon_start, end: l.epsilon_end, decay_episodes: l.epsilon_decay_episodes },
        epsilon_scope: match l.epsilon_scope {
            ScopeSpec::Run => EpsilonScope::Run,
            ScopeSpec::Stage => EpsilonScope::Stage,
        },
        episodes_per_round: l.episodes_per_round,
        max_episode_steps: max_steps,
    }
}

/// Curriculum settings of the experiment with `delta_alpha` replaced.
pub fn curriculum_config(cfg: &ExperimentConfig, method: Method, delta_alpha: f64) -> CurriculumConfig {
    let c = &cfg.curriculum;
    CurriculumConfig {
        delta_alpha,
        reward_threshold: c.reward_threshold,
        max_stages: c.max_stages,
        max_rounds_per_stage: c.max_rounds_per_stage,
        metric_choice: match (method, c.metric) {
            (Method::GradientEmbedded, _) => MetricChoice::Embedded,
            (_, MetricSpec::ExactBisim) => MetricChoice::ExactBisim,
            (_, MetricSpec::PiBisim) => MetricChoice::PiBisim,
            (_, MetricSpec::L2) => MetricChoice::L2,
            (_, MetricSpec::RewardGap) => MetricChoice::RewardGap,
        },
        train_to_budget: c.train_to_budget,
    }
}

pub fn embedded_config(cfg: &ExperimentConfig) -> EmbeddedConfig {
    let e = &cfg.embedding;
    EmbeddedConfig {
        arch: Architecture { context_dim: 2, hidden: e.hidden.clone(), latent_dim: e.latent_dim },
        embed: EmbedTrainConfig {
            lambda: e.lambda,
            learning_rate: e.learning_rate,
            epochs: e.epochs,
            batch_size: e.batch_size,
            n_pairs: e.n_pairs,
            seed: 0,
        },
        recent_samples: e.recent_samples,
        ridge: e.ridge,
        bandwidth: None,
    }
}

struct Trained {
    trace: CurriculumTrace,
    curve: Vec<CurvePoint>,
    trajectory: Vec<geocurr_core::envs::TrajectoryStep>,
}

fn train<E: EpisodicEnv>(
    sh: &Shared,
    env: &E,
    method: Method,
    seed: u64,
    schedule: &mut dyn StageSchedule<E::Context>,
) -> Result<Trained, CliError> {
    let cfg = sh.cfg;
    let max_steps = sh.max_steps();
    let mut learner = QLearner::new(env, learner_config(cfg, max_steps))?.with_budget(cfg.learner.budget);
    let eval_seed = seed.wrapping_add(cfg.evaluation.seed_offset);
    let mut evaluator =
        TargetEvaluator::new(env, sh.nu.clone(), cfg.evaluation.interval, cfg.evaluation.episodes, max_steps, eval_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ccfg = curriculum_config(cfg, method, cfg.curriculum.delta_alpha);
    let trace = run_curriculum(env, &ccfg, &mut learner, schedule, &mut rng, &mut evaluator)?;
    let curve = evaluator.finish()?;

    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed.wrapping_add(1));
    let context = env.sample_context(&sh.nu, &mut rng)?;
    let q = learner.q();
    let trajectory = rollout(env, &context, |s, _| q.greedy_action(s), max_steps, &mut rng)?;
    Ok(Trained { trace, curve, trajectory })
}

fn baseline(sh: &Shared, method: Method) -> Option<BaselineSchedule> {
    let kind = match method {
        Method::NoCurriculum => BaselineKind::NoCurriculum,
        Method::DomainRandomization => BaselineKind::DomainRandomization,
        Method::Linear => BaselineKind::Linear,
        Method::Gradient | Method::GradientEmbedded => return None,
    };
    Some(BaselineSchedule { kind, mu: sh.mu.clone(), nu: sh.nu.clone(), uniform: sh.uniform.clone() })
}

fn run_maze(sh: &Shared, maze: &Maze, method: Method, seed: u64) -> Result<(Trained, Vec<PathBuf>), CliError> {
    let env = maze.cmdp();
    let trained = match baseline(sh, method) {
        Some(mut s) => train(sh, env, method, seed, &mut s)?,
        None => {
            let mut s = GeodesicSchedule::new(&sh.mu, &sh.nu, sh.ground(), SinkhornConfig::barycenter())?;
            train(sh, env, method, seed, &mut s)?
        }
    };
    let root = &sh.cfg.output_dir;
    let dir = run_dir(method, seed);
    let mut files = Vec::new();
    for s in &trained.trace.stages {
        if let TaskDistribution::Categorical(c) = &s.distribution {
            write_with(root, dir.join(format!("stage_{:02}.pgm", s.k)), &mut files, |w| {
                maze_heatmap(maze, c, HEATMAP_SCALE, w)
            })?;
        }
    }
    Ok((trained, files))
}

fn run_field(sh: &Shared, field: &GoalField, method: Method, seed: u64) -> Result<(Trained, Vec<PathBuf>), CliError> {
    let root = &sh.cfg.output_dir;
    let dir = run_dir(method, seed);
    let mut files = Vec::new();
    let trained = match (method, baseline(sh, method)) {
        (_, Some(mut s)) => train(sh, field, method, seed, &mut s)?,
        (Method::GradientEmbedded, None) => {
            let (mu, nu) = match (&sh.mu, &sh.nu) {
                (TaskDistribution::Particles(a), TaskDistribution::Particles(b)) => (a, b),
                _ => return Err(CliError::Config("gradient_embedded needs particle distributions".into())),
            };
            let mut s = EmbeddedSchedule::new(field, mu, nu, embedded_config(sh.cfg))?;
            let trained = train(sh, field, method, seed, &mut s)?;
            for stage in &trained.trace.stages {
                if let Some(d) = stage.embedding.as_ref().and_then(|e| e.decoded.clone()) {
                    write_with(root, dir.join(format!("decoded_{:02}.csv", stage.k)), &mut files, |w| {
                        write_distribution(&d.into(), w)
                    })?;
                }
            }
            for (k, e) in s.embeddings() {
                write_with(root, dir.join(format!("embed_params_{k:02}.csv")), &mut files, |w| write_params(&e.params, w))?;
                write_with(root, dir.join(format!("embed_report_{k:02}.csv")), &mut files, |w| {
                    write_embed_report(&e.report, w)
                })?;
            }
            trained
        }
        (_, None) => {
            let mut s = GeodesicSchedule::new(&sh.mu, &sh.nu, sh.ground(), SinkhornConfig::barycenter())?;
            train(sh, field, method, seed, &mut s)?
        }
    };
    Ok((trained, files))
}

pub fn run_dir(method: Method, seed: u64) -> PathBuf {
    PathBuf::from(method.name()).join(seed.to_string())
}

fn run_one(sh: &Shared, method: Method, seed: u64) -> Result<SeedRun, CliError> {
    let (trained, mut files) = match sh.world {
        World::Maze(m) => run_maze(sh, m, method, seed)?,
        World::Field(f) => run_field(sh, f, method, seed)?,
    };
    let root = &sh.cfg.output_dir;
    let dir = run_dir(method, seed);
    write_with(root, dir.join("curve.csv"), &mut files, |w| write_curve(&trained.curve, w))?;
    write_with(root, dir.join("stages.csv"), &mut files, |w| write_stage_summary(&trained.trace, w))?;
    for s in &trained.trace.stages {
        write_with(root, dir.join(format!("stage_{:02}.csv", s.k)), &mut files, |w| {
            write_distribution(&s.distribution, w)
        })?;
    }
    write_with(root, dir.join("trajectory.csv"), &mut files, |w| write_trajectory(&trained.trajectory, w))?;
    let ev = &sh.cfg.evaluation;
    Ok(SeedRun {
        method,
        seed,
        time_to_threshold: time_to_threshold(&trained.curve, sh.cfg.curriculum.reward_threshold, ev.window),
        curve: trained.curve,
        completed: trained.trace.completed,
        files,
    })
}

/// Runs every method on every seed on a pool of `workers` threads, then
/// writes the aggregate tables and the manifest. Failed runs are listed in
/// `failures.csv` and reported as a partial failure after everything else
/// has been written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let world = World::build(&cfg.environment)?;
    let mu = world.distribution(&cfg.source, "source")?;
    let nu = world.distribution(&cfg.target, "target")?;
    let uniform = world.uniform()?;
    let (table, points) = match &world {
        World::Maze(m) => (Some(maze_ground_table(m, cfg.curriculum.metric)?), None),
        World::Field(f) => (None, Some(field_metric(f, cfg.curriculum.metric))),
    };
    let sh = Shared { cfg, world: &world, mu, nu, uniform, table, points };

    let jobs: Vec<(Method, u64)> =
        cfg.methods.iter().flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    let results: Vec<Result<SeedRun, CliError>> =
        pool.install(|| jobs.par_iter().map(|&(m, s)| run_one(&sh, m, s)).collect());

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((method, seed), r) in jobs.into_iter().zip(results) {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(RunFailure { method, seed, error: e.to_string() }),
        }
    }

    let root = &cfg.output_dir;
    let mut files: Vec<PathBuf> = runs.iter().flat_map(|r| r.files.iter().cloned()).collect();
    write_with(root, "aggregate_curves.csv".into(), &mut files, |w| write_aggregate(&cfg.methods, &runs, w))?;
    write_with(root, "time_to_threshold.csv".into(), &mut files, |w| write_thresholds(&runs, w))?;
    write_with(root, "summary.csv".into(), &mut files, |w| write_summary(&cfg.methods, &runs, &failures, w))?;
    write_with(root, "failures.csv".into(), &mut files, |w| write_failures(&failures, w))?;
    let manifest = write_manifest(root, files)?;

    if !failures.is_empty() {
        for f in &failures {
            eprintln!("{}/{}: {}", f.method.name(), f.seed, f.error);
        }
        return Err(CliError::Partial { failed: failures.len(), total: failures.len() + runs.len() });
    }
    Ok(RunReport { runs, failures, manifest })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Mean and sample standard deviation (zero for a single value) in input
/// order.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per method and evaluation step: mean and std of the evaluation return
/// over the seeds that have a point at that step.
pub fn aggregate_curves(methods: &[Method], runs: &[SeedRun]) -> Vec<(Method, u64, Vec<f64>)> {
    let mut rows = Vec::new();
    for &m in methods {
        let curves: Vec<&[CurvePoint]> = runs.iter().filter(|r| r.method == m).map(|r| r.curve.as_slice()).collect();
        let mut steps: Vec<u64> = curves.iter().flat_map(|c| c.iter().map(|p| p.env_steps)).collect();
        steps.sort_unstable();
        steps.dedup();
        for s in steps {
            let xs: Vec<f64> =
                curves.iter().filter_map(|c| c.iter().find(|p| p.env_steps == s)).map(|p| p.mean_return).collect();
            rows.push((m, s, xs));
        }
    }
    rows
}

fn write_aggregate<W: Write>(methods: &[Method], runs: &[SeedRun], w: W) -> Result<(), IoError> {
    let mut out = csv_writer(w);
    out.write_record(["method", "env_steps", "n", "mean", "std"])?;
    for (m, s, xs) in aggregate_curves(methods, runs) {
        let (mean, std) = mean_std(&xs);
        out.write_record([m.name().to_string(), s.to_string(), xs.len().to_string(), format!("{mean}"), format!("{std}")])?;
    }
    out.flush()?;
    Ok(())
}

fn write_thresholds<W: Write>(runs: &[SeedRun], w: W) -> Result<(), IoError> {
    let mut out = csv_writer(w);
    out.write_record(["method", "seed", "env_steps", "completed"])?;
    for r in runs {
        out.write_record([
            r.method.name().to_string(),
            r.seed.to_string(),
            r.time_to_threshold.map(|s| s.to_string()).unwrap_or_default(),
            r.completed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Median with unreached runs counted as infinitely slow; `None` when the
/// median run did not reach the threshold.
pub fn median_time(times: &[Option<u64>]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = times.iter().map(|t| t.map_or(f64::INFINITY, |s| s as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    m.is_finite().then_some(m)
}

fn write_summary<W: Write>(methods: &[Method], runs: &[SeedRun], failures: &[RunFailure], w: W) -> Result<(), IoError> {
    let mut out = csv_writer(w);
    out.write_record(["method", "seeds", "failed", "reached", "median_time_to_threshold"])?;
    for &m in methods {
        let times: Vec<Option<u64>> = runs.iter().filter(|r| r.method == m).map(|r| r.time_to_threshold).collect();
        out.write_record([
            m.name().to_string(),
            times.len().to_string(),
            failures.iter().filter(|f| f.method == m).count().to_string(),
            times.iter().filter(|t| t.is_some()).count().to_string(),
            median_time(&times).map(|t| format!("{t}")).unwrap_or_else(|| "not_reached".into()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn write_failures<W: Write>(failures: &[RunFailure], w: W) -> Result<(), IoError> {
    let mut out = csv_writer(w);
    out.write_record(["method", "seed", "error"])?;
    for f in failures {
        out.write_record([f.method.name(), &f.seed.to_string(), &f.error])?;
    }
    out.flush()?;
    Ok(())
}

/// `manifest.csv` in `root`: every listed artifact with its SHA-256 and size,
/// sorted by path.
pub fn write_manifest(root: &Path, mut files: Vec<PathBuf>) -> Result<PathBuf, CliError> {
    files.sort();
    files.dedup();
    let path = root.join("manifest.csv");
    let mut out = csv_writer(create(&path)?);
    out.write_record(["path", "sha256", "bytes"]).map_err(IoError::from)?;
    for f in files {
        let bytes = fs::read(root.join(&f))?;
        let rel = f.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.write_record([rel, hex::encode(Sha256::digest(&bytes)), bytes.len().to_string()]).map_err(IoError::from)?;
    }
    out.flush()?;
    Ok(path)
}

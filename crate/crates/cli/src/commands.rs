use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use geocurr_core::curriculum::{transfer_gap_audit, Audit, GeodesicSchedule, AUDIT_SUPPORT_FLOOR};
use geocurr_core::envs::{maze_from_layout, MazeParams};
use geocurr_core::io::{maze_heatmap, read_distribution, table_heatmap, write_audit, write_distribution, write_table, IoError};
use geocurr_core::metrics::l2_surrogate;
use geocurr_core::ot::{Ground, SinkhornConfig, TaskDistribution};

use crate::config::{ExperimentConfig, Method, MetricSpec};
use crate::run::{create, curriculum_config, write_manifest, write_with, HEATMAP_SCALE};
use crate::world::{audit_table, load_layout, maze_ground_table, policy_metric_table, World};
use crate::CliError;

fn read_dist(path: &Path) -> Result<TaskDistribution, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    read_distribution(BufReader::new(f)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Audit of one stage grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRun {
    pub delta_alpha: f64,
    pub audit: Audit,
}

/// Transfer-gap audit of the geodesic stages for every `delta_alpha` in the
/// config, written to `<outdir>/audit/`.
pub fn audit_command(cfg: &ExperimentConfig) -> Result<Vec<AuditRun>, CliError> {
    cfg.validate()?;
    let world = World::build(&cfg.environment)?;
    let maze = match &world {
        World::Maze(m) => m,
        World::Field(_) => return Err(CliError::Config("environment: the audit needs a maze".into())),
    };
    if cfg.audit.delta_alphas.is_empty() {
        return Err(CliError::Config("audit.delta_alphas: must not be empty".into()));
    }
    let mu = world.distribution(&cfg.source, "source")?;
    let nu = world.distribution(&cfg.target, "target")?;
    let ground = maze_ground_table(maze, cfg.curriculum.metric)?;
    let d_star = audit_table(maze)?;

    let root = &cfg.output_dir;
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for &da in &cfg.audit.delta_alphas {
        let ccfg = curriculum_config(cfg, Method::Gradient, da);
        ccfg.validate()?;
        let mut schedule = GeodesicSchedule::new(&mu, &nu, Ground::Indexed(&ground), SinkhornConfig::barycenter())?;
        let mut stages = Vec::new();
        for k in 0..=ccfg.final_stage() {
            let alpha = ccfg.alpha(k);
            match schedule.at(alpha)? {
                TaskDistribution::Categorical(c) => stages.push((alpha, c)),
                TaskDistribution::Particles(_) => unreachable!("maze stages are categorical"),
            }
        }
        let audit = transfer_gap_audit(maze.cmdp(), &stages, &d_star, cfg.audit.eps_tol, AUDIT_SUPPORT_FLOOR)?;
        write_with(root, PathBuf::from("audit").join(format!("audit_delta_{da}.csv")), &mut files, |w| {
            write_audit(&audit, w)
        })?;
        runs.push(AuditRun { delta_alpha: da, audit });
    }
    write_with(root, PathBuf::from("audit").join("audit_summary.csv"), &mut files, |w| {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["delta_alpha", "stages", "m_hat", "max_gap"])?;
        for r in &runs {
            out.write_record([
                format!("{}", r.delta_alpha),
                (r.audit.rows.len() + 1).to_string(),
                format!("{}", r.audit.m_hat),
                format!("{}", r.audit.max_gap),
            ])?;
        }
        out.flush()?;
        Ok::<(), IoError>(())
    })?;
    write_manifest(&root.join("audit"), files.iter().map(|f| f.strip_prefix("audit").unwrap().to_path_buf()).collect())?;
    Ok(runs)
}

/// PGM heatmap of a categorical distribution over a maze layout.
pub fn heatmap_command(dist: &Path, layout: &Path, out: &Path, scale: Option<usize>) -> Result<(), CliError> {
    let maze = maze_from_layout(&load_layout(layout)?, &MazeParams::default())?;
    let d = match read_dist(dist)? {
        TaskDistribution::Categorical(c) => c,
        TaskDistribution::Particles(_) => {
            return Err(CliError::Config(format!("{}: heatmaps need a categorical distribution", dist.display())))
        }
    };
    let n = maze.context_states().len();
    if d.len() != n {
        return Err(CliError::Config(format!("{}: {} contexts, layout has {n}", dist.display(), d.len())));
    }
    let mut w = create(out)?;
    maze_heatmap(&maze, &d, scale.unwrap_or(HEATMAP_SCALE), &mut w)?;
    w.flush()?;
    Ok(())
}

/// Geodesic interpolant at `alpha`: the fixed-support barycenter over a
/// maze's contexts under the squared `metric`, or McCann interpolation of
/// two particle clouds under squared L2.
pub fn barycenter_command(
    mu: &Path,
    nu: &Path,
    alpha: f64,
    metric: MetricSpec,
    layout: Option<&Path>,
    out: &mut dyn Write,
) -> Result<TaskDistribution, CliError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CliError::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let (a, b) = (read_dist(mu)?, read_dist(nu)?);
    let table;
    let l2 = l2_surrogate(a.as_particles().map_or(0, |p| p.dim()));
    let ground = match (&a, &b) {
        (TaskDistribution::Categorical(ca), TaskDistribution::Categorical(cb)) => {
            let layout = layout.ok_or_else(|| CliError::Config("categorical barycenters need --layout".into()))?;
            let maze = maze_from_layout(&load_layout(layout)?, &MazeParams::default())?;
            let n = maze.context_states().len();
            if ca.len() != n || cb.len() != n {
                return Err(CliError::Config(format!("distributions cover {} and {} contexts, layout has {n}", ca.len(), cb.len())));
            }
            table = maze_ground_table(&maze, metric)?;
            Ground::Indexed(&table)
        }
        (TaskDistribution::Particles(_), TaskDistribution::Particles(_)) => {
            if metric != MetricSpec::L2 {
                return Err(CliError::Config("particle barycenters support only the l2 metric".into()));
            }
            Ground::Points(&l2)
        }
        _ => return Err(CliError::Config("mu and nu must be of the same kind".into())),
    };
    let rho = GeodesicSchedule::new(&a, &b, ground, SinkhornConfig::barycenter())?.at(alpha)?;
    write_distribution(&rho, &mut *out)?;
    out.flush()?;
    Ok(rho)
}

/// π-contextual distance table of a maze for the optimal policy or a
/// seeded random policy, as CSV with an optional PGM rendering.
pub fn metric_command(
    layout: &Path,
    random_seed: Option<u64>,
    out: &mut dyn Write,
    pgm: Option<&Path>,
) -> Result<(), CliError> {
    let maze = maze_from_layout(&load_layout(layout)?, &MazeParams::default())?;
    let table = policy_metric_table(&maze, random_seed)?;
    write_table(&table, &mut *out)?;
    out.flush()?;
    if let Some(p) = pgm {
        let mut w = create(p)?;
        table_heatmap(&table, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

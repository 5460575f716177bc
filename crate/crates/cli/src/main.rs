use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use geocurr_cli::commands::{audit_command, barycenter_command, heatmap_command, metric_command};
use geocurr_cli::run::run_experiment;
use geocurr_cli::{CliError, ExperimentConfig, MetricSpec};

#[derive(Parser)]
#[command(name = "geocurr", version, about = "Wasserstein-geodesic curriculum experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    ExactBisim,
    PiBisim,
    L2,
    RewardGap,
}

impl From<MetricArg> for MetricSpec {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::ExactBisim => MetricSpec::ExactBisim,
            MetricArg::PiBisim => MetricSpec::PiBisim,
            MetricArg::L2 => MetricSpec::L2,
            MetricArg::RewardGap => MetricSpec::RewardGap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method on every seed and write curves, stages and aggregates.
    Run { config: PathBuf },
    /// Transfer-gap audit of the geodesic stages for each configured step size.
    Audit { config: PathBuf },
    /// Render a categorical maze distribution as a PGM image.
    Heatmap {
        dist: PathBuf,
        layout: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Pixels per maze cell.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Geodesic interpolant between two distribution CSVs.
    Barycenter {
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "exact-bisim")]
        metric: MetricArg,
        /// Maze layout for categorical distributions.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Contextual bisimulation distance table of a maze.
    Metric {
        layout: PathBuf,
        #[arg(long, value_enum, default_value = "optimal")]
        policy: PolicyArg,
        /// Seed of the random policy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the table as a PGM image.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

fn sink(out: Option<PathBuf>) -> Result<Box<dyn io::Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            println!("{} runs written; manifest {}", report.runs.len(), report.manifest.display());
        }
        Command::Audit { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for r in audit_command(&cfg)? {
                println!("delta_alpha {}: m_hat {} max_gap {}", r.delta_alpha, r.audit.m_hat, r.audit.max_gap);
            }
        }
        Command::Heatmap { dist, layout, out, scale } => {
            let out = out.unwrap_or_else(|| dist.with_extension("pgm"));
            heatmap_command(&dist, &layout, &out, scale)?;
        }
        Command::Barycenter { mu, nu, alpha, metric, layout, out } => {
            barycenter_command(&mu, &nu, alpha, metric.into(), layout.as_deref(), &mut *sink(out)?)?;
        }
        Command::Metric { layout, policy, seed, out, pgm } => {
            let seed = matches!(policy, PolicyArg::Random).then_some(seed);
            metric_command(&layout, seed, &mut *sink(out)?, pgm.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub environment: EnvSpec,
    pub source: DistSpec,
    pub target: DistSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub curriculum: CurriculumSpec,
    #[serde(default)]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub evaluation: EvalSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Maze {
        layout: PathBuf,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_step_reward")]
        step_reward: f64,
        #[serde(default)]
        goal_reward: f64,
    },
    GoalField {
        bounds: [[f64; 2]; 2],
        #[serde(default)]
        obstacles: Vec<[[f64; 2]; 2]>,
        goal_radius: f64,
        max_steps: usize,
        #[serde(default = "default_step_reward")]
        step_penalty: f64,
        #[serde(default = "default_step_size")]
        step_size: f64,
        origin: [f64; 2],
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

fn default_gamma() -> f64 {
    0.99
}

fn default_step_reward() -> f64 {
    -1.0
}

fn default_step_size() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    /// Uniform over maze contexts whose goal distance lies in `min..=max`.
    Shells { min: usize, max: usize },
    /// Uniform over the listed context indices.
    Contexts { indices: Vec<usize> },
    /// Uniform over the listed `[row, col]` maze cells.
    Cells { cells: Vec<[usize; 2]> },
    /// `particles` points drawn uniformly from the box with `seed`.
    Box { min: [f64; 2], max: [f64; 2], particles: usize, seed: u64 },
    /// A distribution CSV.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    GradientEmbedded,
    NoCurriculum,
    DomainRandomization,
    Linear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::GradientEmbedded => "gradient_embedded",
            Method::NoCurriculum => "no_curriculum",
            Method::DomainRandomization => "domain_randomization",
            Method::Linear => "linear",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    ExactBisim,
    PiBisim,
    L2,
    RewardGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSpec {
    pub delta_alpha: f64,
    pub reward_threshold: f64,
    pub max_stages: usize,
    pub max_rounds_per_stage: usize,
    pub metric: MetricSpec,
    pub train_to_budget: bool,
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        Self {
            delta_alpha: 0.1,
            reward_threshold: -15.0,
            max_stages: 20,
            max_rounds_per_stage: 200,
            metric: MetricSpec::ExactBisim,
            train_to_budget: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeSpec {
    Run,
    Stage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSpec {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
    pub epsilon_scope: ScopeSpec,
    pub episodes_per_round: usize,
    /// Defaults to `4 * (height + width)` on mazes and the field's own cap.
    pub max_episode_steps: Option<usize>,
    pub budget: u64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 1000,
            epsilon_scope: ScopeSpec::Run,
            episodes_per_round: 50,
            max_episode_steps: None,
            budget: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub interval: u64,
    pub episodes: usize,
    pub window: usize,
    /// Evaluation stream seed is the run seed plus this offset.
    pub seed_offset: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { interval: 1000, episodes: 30, window: 10, seed_offset: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_pairs: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub recent_samples: usize,
    pub ridge: f64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            n_pairs: 1000,
            hidden: vec![32, 32],
            latent_dim: 2,
            recent_samples: 500,
            ridge: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    pub delta_alphas: Vec<f64>,
    pub eps_tol: f64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { delta_alphas: vec![0.2, 0.1, 0.05], eps_tol: 1e-10 }
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative paths inside it resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(&path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvSpec::Maze { layout, .. } = &mut self.environment {
            fix(layout);
        }
        for d in [&mut self.source, &mut self.target] {
            if let DistSpec::File { path } = d {
                fix(path);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn is_maze(&self) -> bool {
        matches!(self.environment, EnvSpec::Maze { .. })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must not be empty"));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(bad("seeds", format!("duplicate seed {s}")));
        }
        if self.methods.is_empty() {
            return Err(bad("methods", "must not be empty"));
        }
        let mut seen = HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return Err(bad("methods", format!("duplicate method {}", m.name())));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be positive"));
        }
        let maze = self.is_maze();
        if maze && self.methods.contains(&Method::GradientEmbedded) {
            return Err(bad("methods", "gradient_embedded needs continuous contexts (goal_field)"));
        }
        if !maze && matches!(self.curriculum.metric, MetricSpec::ExactBisim | MetricSpec::PiBisim) {
            return Err(bad("curriculum.metric", "bisimulation metrics need a maze environment"));
        }
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            let ok = match d {
                DistSpec::Shells { min, max } => maze && min <= max,
                DistSpec::Contexts { indices } => maze && !indices.is_empty(),
                DistSpec::Cells { cells } => maze && !cells.is_empty(),
                DistSpec::Box { min, max, particles, .. } => {
                    !maze && *particles > 0 && min[0] <= max[0] && min[1] <= max[1]
                }
                DistSpec::File { .. } => true,
            };
            if !ok {
                return Err(bad(name, "empty or does not match the environment kind"));
            }
        }
        let c = &self.curriculum;
        if !(c.delta_alpha > 0.0 && c.delta_alpha <= 1.0) {
            return Err(bad("curriculum.delta_alpha", format!("must lie in (0, 1], got {}", c.delta_alpha)));
        }
        if c.max_rounds_per_stage == 0 {
            return Err(bad("curriculum.max_rounds_per_stage", "must be positive"));
        }
        let l = &self.learner;
        if !(l.learning_rate > 0.0 && l.learning_rate <= 1.0) {
            return Err(bad("learner.learning_rate", format!("must lie in (0, 1], got {}", l.learning_rate)));
        }
        for (f, v) in [("learner.epsilon_start", l.epsilon_start), ("learner.epsilon_end", l.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(f, format!("must lie in [0, 1], got {v}")));
            }
        }
        if l.episodes_per_round == 0 || l.budget == 0 || l.max_episode_steps == Some(0) {
            return Err(bad("learner", "episodes_per_round, budget and max_episode_steps must be positive"));
        }
        let e = &self.evaluation;
        if e.interval == 0 || e.episodes == 0 || e.window == 0 {
            return Err(bad("evaluation", "interval, episodes and window must be positive"));
        }
        if self.audit.delta_alphas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(bad("audit.delta_alphas", "each must lie in (0, 1]"));
        }
        let m = &self.embedding;
        if m.latent_dim == 0 || m.hidden.contains(&0) || m.batch_size == 0 || m.n_pairs == 0 || m.recent_samples == 0 {
            return Err(bad("embedding", "widths, batch_size, n_pairs and recent_samples must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "environment": {"kind": "maze", "layout": "maze.txt"},
        "source": {"kind": "shells", "min": 1, "max": 3},
        "target": {"kind": "shells", "min": 12, "max": 14},
        "methods": ["gradient", "linear"],
        "seeds": [0, 1],
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.learner.budget, 100_000);
        assert_eq!(cfg.evaluation, EvalSpec::default());
        assert_eq!(cfg.curriculum.reward_threshold, -15.0);
    }

    #[test]
    fn rejects_duplicate_seeds() {
        let text = MINIMAL.replace("[0, 1]", "[3, 3]");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate seed 3"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = MINIMAL.replace("\"seeds\"", "\"colour\": 1, \"seeds\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("\"min\": 1,", "\"min\": 1, \"extra\": 0,");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn rejects_wrong_schema_and_kinds() {
        assert!(ExperimentConfig::from_json(&MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2")).is_err());
        let text = MINIMAL.replace("[\"gradient\", \"linear\"]", "[\"gradient_embedded\"]");
        assert!(ExperimentConfig::from_json(&text).is_err());
        assert!(ExperimentConfig::from_json(&MINIMAL.replace("\"seeds\": [0, 1]", "\"seeds\": []")).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.output_dir, PathBuf::from("/cfg/out"));
        assert!(matches!(&cfg.environment, EnvSpec::Maze { layout, .. } if layout == Path::new("/cfg/maze.txt")));
    }
}

//! Experiment configuration (TOML).

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use cmdp_core::environments::{build_queue, build_static_example, ConstrainedProblem, QueueParams, StaticExample};
use cmdp_core::learner::ExplorationSchedule;
use cmdp_core::model::ModelDocument;

/// Configuration problem; always names the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Discounted,
    Average,
    OracleFixedPoint,
    OracleRvi,
    OracleLp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Discounted => "discounted",
            Algorithm::Average => "average",
            Algorithm::OracleFixedPoint => "oracle-fixed-point",
            Algorithm::OracleRvi => "oracle-rvi",
            Algorithm::OracleLp => "oracle-lp",
        }
    }

    pub fn is_learner(self) -> bool {
        matches!(self, Algorithm::Discounted | Algorithm::Average)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Trajectories for the final audit.
    pub n_traj: usize,
    /// Trajectories at intermediate checkpoints.
    pub checkpoint_n_traj: usize,
    /// Audit every this many steps (0: final only).
    pub every: u64,
    pub tol: f64,
    pub margin: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { n_traj: 10_000, checkpoint_n_traj: 200, every: 100, tol: 1e-3, margin: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionConfig {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_delta_tol")]
    pub tol: f64,
}

fn default_delta_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    environment: Option<String>,
    model: Option<ModelDocument>,
    queue: Option<QueueParams>,
    algorithm: Algorithm,
    #[serde(default, alias = "K")]
    steps: u64,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    exploration: ExplorationSchedule,
    #[serde(default)]
    snapshot_every: u64,
    delta: Option<f64>,
    #[serde(default = "default_oracle_tol")]
    oracle_tol: f64,
    evaluation: Option<EvaluationConfig>,
    bisection: Option<BisectionConfig>,
    output: Option<PathBuf>,
}

fn default_oracle_tol() -> f64 {
    1e-9
}

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Preset(String),
    Inline,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub environment: Environment,
    pub problem: ConstrainedProblem,
    pub algorithm: Algorithm,
    pub steps: u64,
    pub seeds: Vec<u64>,
    pub exploration: ExplorationSchedule,
    pub snapshot_every: u64,
    pub delta: Option<f64>,
    pub oracle_tol: f64,
    pub evaluation: Option<EvaluationConfig>,
    pub bisection: Option<BisectionConfig>,
    pub output: Option<PathBuf>,
}

pub const PRESETS: &[&str] = &["example1", "example2", "queue"];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("<document>")
                .to_string();
            ConfigError::new(field, msg)
        })?;
        raw.validate()
    }

    /// The problem actually solved: the objective turned into a constraint when `delta` is set.
    pub fn effective_problem(&self, delta: Option<f64>) -> Result<ConstrainedProblem, ConfigError> {
        match delta {
            Some(d) => cmdp_core::environments::shift_rewards(&self.problem, d)
                .map_err(|e| ConfigError::new("delta", e.to_string())),
            None => Ok(self.problem.clone()),
        }
    }
}

impl RawConfig {
    fn validate(self) -> Result<ExperimentConfig, ConfigError> {
        let (environment, problem) = match (self.environment, self.model) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("model", "give either `environment` or an inline `model`, not both"))
            }
            (None, None) => return Err(ConfigError::new("environment", "missing; expected one of example1, example2, queue")),
            (Some(name), None) => {
                let problem = match name.as_str() {
                    "example1" => build_static_example(StaticExample::Example1),
                    "example2" => build_static_example(StaticExample::Example2),
                    "queue" => build_queue(&self.queue.clone().unwrap_or_default())
                        .map_err(|e| ConfigError::new("queue", e.to_string()))?,
                    other => {
                        return Err(ConfigError::new(
                            "environment",
                            format!("unknown environment `{other}`; expected one of {}", PRESETS.join(", ")),
                        ))
                    }
                };
                if self.queue.is_some() && name != "queue" {
                    return Err(ConfigError::new("queue", "queue parameters given for a non-queue environment"));
                }
                (Environment::Preset(name), problem)
            }
            (None, Some(doc)) => {
                let game = doc.into_model().map_err(|e| ConfigError::new("model", e.to_string()))?;
                let problem =
                    ConstrainedProblem::from_game(&game).map_err(|e| ConfigError::new("model", e.to_string()))?;
                (Environment::Inline, problem)
            }
        };

        let seeds = match (self.seed, self.seeds) {
            (Some(_), Some(_)) => return Err(ConfigError::new("seeds", "give either `seed` or `seeds`")),
            (Some(s), None) => vec![s],
            (None, Some(v)) if v.is_empty() => return Err(ConfigError::new("seeds", "must not be empty")),
            (None, Some(v)) => v,
            (None, None) => vec![0],
        };
        let e = self.exploration;
        if !(0.0..=1.0).contains(&e.initial) || !(0.0..=1.0).contains(&e.floor) {
            return Err(ConfigError::new("exploration", "initial and floor must lie in [0, 1]"));
        }
        if !(self.oracle_tol > 0.0) {
            return Err(ConfigError::new("oracle_tol", "must be positive"));
        }
        let criterion = problem.criterion();
        match self.algorithm {
            Algorithm::Discounted | Algorithm::OracleFixedPoint | Algorithm::OracleLp if criterion.is_average() => {
                return Err(ConfigError::new(
                    "algorithm",
                    format!("`{}` needs a discounted environment", self.algorithm.name()),
                ))
            }
            Algorithm::Average | Algorithm::OracleRvi if !criterion.is_average() => {
                return Err(ConfigError::new(
                    "algorithm",
                    format!("`{}` needs an average-reward environment", self.algorithm.name()),
                ))
            }
            _ => {}
        }
        if let Some(d) = self.delta {
            if !d.is_finite() {
                return Err(ConfigError::new("delta", "must be finite"));
            }
            if problem.objective().is_none() {
                return Err(ConfigError::new("delta", "environment has no objective to shift"));
            }
        }
        if let Some(ev) = &self.evaluation {
            if ev.n_traj == 0 || ev.checkpoint_n_traj == 0 {
                return Err(ConfigError::new("evaluation.n_traj", "must be positive"));
            }
            if !(ev.tol > 0.0) {
                return Err(ConfigError::new("evaluation.tol", "must be positive"));
            }
            if !(ev.margin >= 0.0) {
                return Err(ConfigError::new("evaluation.margin", "must be nonnegative"));
            }
        }
        if let Some(b) = &self.bisection {
            if !(b.lo < b.hi) {
                return Err(ConfigError::new("bisection.lo", "must be below bisection.hi"));
            }
            if !(b.tol > 0.0) {
                return Err(ConfigError::new("bisection.tol", "must be positive"));
            }
            if problem.objective().is_none() {
                return Err(ConfigError::new("bisection", "environment has no objective to bisect on"));
            }
        }
        Ok(ExperimentConfig {
            environment,
            problem,
            algorithm: self.algorithm,
            steps: self.steps,
            seeds,
            exploration: self.exploration,
            snapshot_every: self.snapshot_every,
            delta: self.delta,
            oracle_tol: self.oracle_tol,
            evaluation: self.evaluation,
            bisection: self.bisection,
            output: self.output,
        })
    }
}

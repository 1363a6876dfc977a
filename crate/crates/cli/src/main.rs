//! `cmdp`: config-driven runner for the constrained Q-learning experiments.

mod artifacts;
mod config;
mod report;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use run::{Command, RunOptions};

#[derive(Parser)]
#[command(name = "cmdp", version, about = "Constrained MDP learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a learner and write its trace, snapshots and summary.
    Learn(RunArgs),
    /// Solve the configured problem with a model-based oracle.
    Oracle(RunArgs),
    /// Like `learn` or `oracle`, with Monte Carlo audits of the policies.
    Evaluate(RunArgs),
    /// Bisect the objective threshold between `bisection.lo` and `bisection.hi`.
    Bisect(RunArgs),
    /// Turn the artifacts in `--out` into figure CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single seed; overrides `seed` and `seeds` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory to read; defaults to `output` from `--config`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Solver { field: String, source: cmdp_core::Error },
    Artifact(String),
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config(ConfigError::new(field, message))
    }

    pub fn output(message: String) -> Self {
        CliError::config("out", message)
    }

    pub fn artifact(message: String) -> Self {
        CliError::Artifact(message)
    }

    pub fn solver(field: &str, source: cmdp_core::Error) -> Self {
        CliError::Solver { field: field.into(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Artifact(_) => 2,
            CliError::Solver { .. } => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Solver { field, source } => write!(f, "solver failed (config field `{field}`): {source}"),
            CliError::Artifact(m) => write!(f, "missing or unreadable artifact (config field `out`): {m}"),
        }
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(CliError::Config)
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.and_then(|c| c.output.clone()))
        .ok_or_else(|| CliError::config("output", "no output directory; set `output` or pass --out"))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (command, args) = match cli.command {
        Cmd::Learn(a) => (Command::Learn, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Bisect(a) => (Command::Bisect, a),
        Cmd::Report(a) => {
            let cfg = a.config.as_ref().map(load).transpose()?;
            let dir = out_dir(a.out, cfg.as_ref())?;
            let written = report::emit_report(&dir)?;
            if !a.quiet {
                eprintln!("wrote {}", if written.is_empty() { "no figures".into() } else { written.join(", ") });
            }
            return Ok(());
        }
    };
    let mut cfg = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let out = out_dir(args.out, Some(&cfg))?;
    run::run(&cfg, command, &RunOptions { out, quiet: args.quiet })
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! The `learn`, `oracle`, `evaluate` and `bisect` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use cmdp_core::environments::{assemble_game, ConstrainedProblem};
use cmdp_core::evaluation::{
    bisect_delta, feasibility_verdict, lp_verdict, mc_constraint_values, ConstraintEstimate, Verdict,
};
use cmdp_core::learner::{run_average, run_discounted, LearnerConfig, RunTrace};
use cmdp_core::matrix_game::maximin_row;
use cmdp_core::model::TabularModel;
use cmdp_core::oracle::{cmdp_lp_discounted, feasibility_value, fixed_point_discounted, rvi_average, DEFAULT_SWEEP_BUDGET};
use cmdp_core::rng::{derive_seed, Stream};

use crate::artifacts::{self as art, ConstraintRow, SnapshotLine};
use crate::config::{Algorithm, Environment, EvaluationConfig, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Learn,
    Oracle,
    Evaluate,
    Bisect,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Learn => "learn",
            Command::Oracle => "oracle",
            Command::Evaluate => "evaluate",
            Command::Bisect => "bisect",
        }
    }
}

pub struct RunOptions {
    pub out: PathBuf,
    pub quiet: bool,
}

fn solver(field: &str) -> impl Fn(cmdp_core::Error) -> CliError + '_ {
    move |e| CliError::solver(field, e)
}

fn environment_name(cfg: &ExperimentConfig) -> String {
    match &cfg.environment {
        Environment::Preset(name) => name.clone(),
        Environment::Inline => "inline".into(),
    }
}

fn schemas() -> Value {
    json!({
        "summary": art::SUMMARY_SCHEMA,
        "trace": art::TRACE_SCHEMA,
        "snapshots": art::SNAPSHOT_SCHEMA,
        "constraints": art::CONSTRAINTS_SCHEMA,
        "bisection": art::BISECTION_SCHEMA,
    })
}

fn base_summary(cfg: &ExperimentConfig, command: Command, seed: Option<u64>) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), json!(art::SUMMARY_SCHEMA));
    m.insert("artifact_schemas".into(), schemas());
    m.insert("command".into(), json!(command.name()));
    m.insert("environment".into(), json!(environment_name(cfg)));
    m.insert("algorithm".into(), json!(cfg.algorithm.name()));
    m.insert("criterion".into(), json!(cfg.problem.criterion()));
    m.insert("initial_state".into(), json!(cfg.problem.initial_state()));
    m.insert("delta".into(), json!(cfg.delta));
    m.insert("seed".into(), json!(seed));
    m.insert("seeds".into(), json!(cfg.seeds));
    m.insert("steps".into(), json!(cfg.steps));
    m
}

fn finish(dir: &Path, mut summary: serde_json::Map<String, Value>, started: Instant) -> Result<(), CliError> {
    summary.insert("wall_time_s".into(), json!(started.elapsed().as_secs_f64()));
    art::write_json(&dir.join(art::SUMMARY_FILE), &Value::Object(summary))
}

fn estimates_json(estimates: &[ConstraintEstimate]) -> Value {
    json!(estimates)
}

pub fn run(cfg: &ExperimentConfig, command: Command, opts: &RunOptions) -> Result<(), CliError> {
    art::ensure_dir(&opts.out)?;
    match command {
        Command::Learn | Command::Evaluate if cfg.algorithm.is_learner() => {
            let started = Instant::now();
            let multi = cfg.seeds.len() > 1;
            for &seed in &cfg.seeds {
                let dir = if multi { opts.out.join(format!("seed_{seed}")) } else { opts.out.clone() };
                art::ensure_dir(&dir)?;
                let evaluation = match command {
                    Command::Evaluate => Some(cfg.evaluation.clone().unwrap_or_default()),
                    _ => cfg.evaluation.clone(),
                };
                learn_one(cfg, command, seed, evaluation.as_ref(), &dir, opts)?;
            }
            if multi {
                let mut summary = base_summary(cfg, command, None);
                let dirs: Vec<String> = cfg.seeds.iter().map(|s| format!("seed_{s}")).collect();
                summary.insert("seed_dirs".into(), json!(dirs));
                finish(&opts.out, summary, started)?;
            }
            Ok(())
        }
        Command::Learn => Err(CliError::config(
            "algorithm",
            format!("`learn` needs a learner (discounted or average), got `{}`", cfg.algorithm.name()),
        )),
        Command::Oracle if cfg.algorithm.is_learner() => Err(CliError::config(
            "algorithm",
            format!("`oracle` needs oracle-fixed-point, oracle-rvi or oracle-lp, got `{}`", cfg.algorithm.name()),
        )),
        Command::Oracle | Command::Evaluate => oracle(cfg, command, opts),
        Command::Bisect => bisect(cfg, opts),
    }
}

fn learner_config(cfg: &ExperimentConfig, seed: u64, snapshot_every: u64, record_steps: bool) -> LearnerConfig {
    LearnerConfig { steps: cfg.steps, exploration: cfg.exploration, seed, snapshot_every, record_steps }
}

fn run_learner(algorithm: Algorithm, game: &TabularModel, lc: &LearnerConfig) -> Result<RunTrace, CliError> {
    match algorithm {
        Algorithm::Discounted => run_discounted(game, lc),
        _ => run_average(game, lc),
    }
    .map_err(solver("algorithm"))
}

fn audit_seed(seed: u64, step: u64) -> u64 {
    derive_seed(seed, Stream::Evaluator, step)
}

fn learn_one(
    cfg: &ExperimentConfig,
    command: Command,
    seed: u64,
    evaluation: Option<&EvaluationConfig>,
    dir: &Path,
    opts: &RunOptions,
) -> Result<(), CliError> {
    let started = Instant::now();
    let problem = cfg.effective_problem(cfg.delta).map_err(CliError::Config)?;
    let game = assemble_game(&problem).map_err(solver("environment"))?;
    let snapshot_every = match (cfg.snapshot_every, evaluation) {
        (0, Some(ev)) => ev.every,
        (n, _) => n,
    };
    let trace = run_learner(cfg.algorithm, &game, &learner_config(cfg, seed, snapshot_every, true))?;
    let lines: Vec<SnapshotLine> = trace.snapshots.iter().map(SnapshotLine::from_snapshot).collect();
    art::write_trace(dir, &trace.records)?;
    art::write_snapshots(dir, &lines)?;

    let mut summary = base_summary(cfg, command, Some(seed));
    let final_snapshot = trace.snapshots.last().expect("final snapshot is always taken");
    summary.insert("final_q".into(), json!(final_snapshot.q.values()));
    summary.insert("final_policy".into(), json!(trace.final_policy.rows()));
    summary.insert("final_f_value".into(), json!(final_snapshot.f_value));
    summary.insert("constraint_labels".into(), json!(constraint_labels(cfg, &problem)));

    if let Some(ev) = evaluation {
        let mut rows = Vec::new();
        let mut last = Vec::new();
        for snap in &trace.snapshots {
            let is_final = snap.step == cfg.steps;
            if !is_final && (ev.every == 0 || !snap.step.is_multiple_of(ev.every)) {
                continue;
            }
            let n = if is_final { ev.n_traj } else { ev.checkpoint_n_traj };
            let est = mc_constraint_values(&problem, &snap.policy, n, ev.tol, audit_seed(seed, snap.step))
                .map_err(solver("evaluation"))?;
            rows.extend(ConstraintRow::rows(snap.step, &est));
            last = est;
        }
        art::write_constraints(dir, &rows)?;
        let verdict = feasibility_verdict(&last, ev.margin);
        if !opts.quiet {
            eprintln!("seed {seed}: {verdict}");
        }
        summary.insert("verdict".into(), json!(verdict));
        summary.insert("margin".into(), json!(ev.margin));
        summary.insert("final_estimates".into(), estimates_json(&last));
    } else if !opts.quiet {
        eprintln!("seed {seed}: {} steps done", cfg.steps);
    }
    finish(dir, summary, started)
}

fn constraint_labels(cfg: &ExperimentConfig, problem: &ConstrainedProblem) -> Vec<String> {
    let mut labels: Vec<String> = (0..cfg.problem.n_constraints()).map(|j| format!("constraint {j}")).collect();
    if problem.n_constraints() > labels.len() {
        labels.push("shifted objective".into());
    }
    labels
}

fn oracle(cfg: &ExperimentConfig, command: Command, opts: &RunOptions) -> Result<(), CliError> {
    let started = Instant::now();
    let problem = cfg.effective_problem(cfg.delta).map_err(CliError::Config)?;
    let mut summary = base_summary(cfg, command, None);
    summary.insert("constraint_labels".into(), json!(constraint_labels(cfg, &problem)));
    let (policy, exact) = match cfg.algorithm {
        Algorithm::OracleLp => {
            let maximize = cfg.delta.is_none() && problem.objective().is_some();
            let res = cmdp_lp_discounted(&problem, maximize).map_err(solver("algorithm"))?;
            summary.insert("feasible".into(), json!(res.feasible));
            summary.insert("objective_value".into(), json!(res.value));
            summary.insert("occupancy".into(), json!(res.occupancy));
            summary.insert("constraint_values".into(), json!(res.constraint_values));
            summary.insert("policy".into(), json!(res.policy.rows()));
            if !opts.quiet {
                eprintln!("LP: {}", if res.feasible { "feasible" } else { "infeasible" });
            }
            (res.policy, if res.feasible { Verdict::Feasible } else { Verdict::Infeasible })
        }
        Algorithm::OracleFixedPoint => {
            let game = assemble_game(&problem).map_err(solver("environment"))?;
            let sol = fixed_point_discounted(&game, cfg.oracle_tol, DEFAULT_SWEEP_BUDGET).map_err(solver("algorithm"))?;
            let value = maximin_row(&sol.q.state_matrix(game.initial_state())).map_err(solver("algorithm"))?.value;
            write_oracle_snapshot(opts, sol.sweeps as u64, &sol.q, &sol.policy, None)?;
            summary.insert("q_star".into(), json!(sol.q.values()));
            summary.insert("policy".into(), json!(sol.policy.rows()));
            summary.insert("value_at_initial_state".into(), json!(value));
            summary.insert("sweeps".into(), json!(sol.sweeps));
            if !opts.quiet {
                eprintln!("fixed point after {} sweeps, value {value:.6}", sol.sweeps);
            }
            (sol.policy, if value >= 0.0 { Verdict::Feasible } else { Verdict::Infeasible })
        }
        Algorithm::OracleRvi => {
            let game = assemble_game(&problem).map_err(solver("environment"))?;
            let sol = rvi_average(&game, cfg.oracle_tol, DEFAULT_SWEEP_BUDGET).map_err(solver("algorithm"))?;
            write_oracle_snapshot(opts, sol.sweeps as u64, &sol.q_star, &sol.policy, Some(sol.anchor))?;
            summary.insert("q_star".into(), json!(sol.q_star.values()));
            summary.insert("policy".into(), json!(sol.policy.rows()));
            summary.insert("v_star".into(), json!(sol.v_star));
            summary.insert("anchor".into(), json!(sol.anchor));
            summary.insert("residual".into(), json!(sol.residual));
            summary.insert("sweeps".into(), json!(sol.sweeps));
            if !opts.quiet {
                eprintln!("RVI after {} sweeps, f(Q*) {:.6}", sol.sweeps, sol.anchor);
            }
            (sol.policy, if sol.anchor >= 0.0 { Verdict::Feasible } else { Verdict::Infeasible })
        }
        Algorithm::Discounted | Algorithm::Average => unreachable!("learners are dispatched elsewhere"),
    };
    summary.insert("exact_verdict".into(), json!(exact));
    if command == Command::Evaluate {
        let ev = cfg.evaluation.clone().unwrap_or_default();
        let seed = cfg.seeds[0];
        let est = mc_constraint_values(&problem, &policy, ev.n_traj, ev.tol, audit_seed(seed, 0))
            .map_err(solver("evaluation"))?;
        art::write_constraints(&opts.out, &ConstraintRow::rows(0, &est))?;
        summary.insert("seed".into(), json!(seed));
        summary.insert("verdict".into(), json!(feasibility_verdict(&est, ev.margin)));
        summary.insert("margin".into(), json!(ev.margin));
        summary.insert("final_estimates".into(), estimates_json(&est));
    }
    finish(&opts.out, summary, started)
}

fn write_oracle_snapshot(
    opts: &RunOptions,
    step: u64,
    q: &cmdp_core::QTable,
    policy: &cmdp_core::MixedPolicy,
    f_value: Option<f64>,
) -> Result<(), CliError> {
    let d = q.dims();
    let line = SnapshotLine {
        step,
        dims: [d.states, d.actions, d.opponents],
        q: q.values().to_vec(),
        policy: policy.rows(),
        f_value,
    };
    art::write_snapshots(&opts.out, &[line])
}

fn bisect(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(), CliError> {
    let started = Instant::now();
    let b = cfg
        .bisection
        .clone()
        .ok_or_else(|| CliError::config("bisection", "`bisect` needs a [bisection] table with lo and hi"))?;
    let ev = cfg.evaluation.clone().unwrap_or_default();
    let seed = cfg.seeds[0];
    let verdict_at = |delta: f64| -> cmdp_core::Result<Verdict> {
        match cfg.algorithm {
            Algorithm::OracleLp => lp_verdict(&cfg.problem, delta),
            Algorithm::OracleFixedPoint | Algorithm::OracleRvi => {
                let game = assemble_game(&cmdp_core::environments::shift_rewards(&cfg.problem, delta)?)?;
                let v = feasibility_value(&game, cfg.oracle_tol)?;
                Ok(if v >= 0.0 { Verdict::Feasible } else { Verdict::Infeasible })
            }
            Algorithm::Discounted | Algorithm::Average => {
                let problem = cmdp_core::environments::shift_rewards(&cfg.problem, delta)?;
                let game = assemble_game(&problem)?;
                let lc = learner_config(cfg, seed, 0, false);
                let trace = match cfg.algorithm {
                    Algorithm::Discounted => run_discounted(&game, &lc)?,
                    _ => run_average(&game, &lc)?,
                };
                let est = mc_constraint_values(&problem, &trace.final_policy, ev.n_traj, ev.tol, audit_seed(seed, cfg.steps))?;
                Ok(feasibility_verdict(&est, ev.margin))
            }
        }
    };
    let quiet = opts.quiet;
    let result = bisect_delta(b.lo, b.hi, b.tol, |delta| {
        let v = verdict_at(delta)?;
        if !quiet {
            eprintln!("delta {delta:.6}: {v}");
        }
        Ok(v)
    })
    .map_err(|e| match e {
        cmdp_core::Error::BracketInvalid(_) => CliError::solver("bisection", e),
        e => CliError::solver("algorithm", e),
    })?;
    art::write_bisection(&opts.out, &result.steps)?;
    let mut summary = base_summary(cfg, Command::Bisect, cfg.algorithm.is_learner().then_some(seed));
    summary.insert("delta_star".into(), json!(result.delta));
    summary.insert("bracket".into(), json!([result.lo, result.hi]));
    summary.insert("delta_tol".into(), json!(b.tol));
    summary.insert("iterations".into(), json!(result.steps.len()));
    if !opts.quiet {
        eprintln!("delta* = {:.4} (bracket [{:.4}, {:.4}])", result.delta, result.lo, result.hi);
    }
    finish(&opts.out, summary, started)
}

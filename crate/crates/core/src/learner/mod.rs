//! Asynchronous maximin Q-learning for Markov-Bandit games.
//!
//! [`LearnerState::step`] runs one iteration of the discounted or the
//! average-reward algorithm depending on the model's criterion;
//! [`run_discounted`] and [`run_average`] loop it and collect a [`RunTrace`].

mod average;
mod discounted;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use average::{beta_schedule, f_mean, run_average};
pub use discounted::{alpha_schedule, run_discounted};

use crate::environments::{sample_index, sample_transition};
use crate::error::{Error, Result};
use crate::matrix_game::{maximin_row, RowSolution};
use crate::model::{Criterion, MixedPolicy, QTable, TabularModel, VisitCounts};
use crate::rng::{stream_rng, Stream, StreamRng};

/// Average-reward runs abort once `|Q|` exceeds this.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// `ε_k = max(floor, initial / sqrt(k))`, with `k` clamped to at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub initial: f64,
    pub floor: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule { initial: 0.05, floor: 0.01 }
    }
}

impl ExplorationSchedule {
    pub fn constant(eps: f64) -> Self {
        ExplorationSchedule { initial: eps, floor: eps }
    }

    pub fn none() -> Self {
        ExplorationSchedule::constant(0.0)
    }

    pub fn eps(&self, k: u64) -> f64 {
        let k = k.max(1) as f64;
        (self.initial / k.sqrt()).max(self.floor).clamp(0.0, 1.0)
    }

    fn check(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if ok(self.initial) && ok(self.floor) {
            Ok(())
        } else {
            Err(Error::InvalidParameter { name: "exploration", reason: "ε values must lie in [0, 1]".into() })
        }
    }
}

/// Run parameters shared by both learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub steps: u64,
    pub exploration: ExplorationSchedule,
    pub seed: u64,
    /// 0 keeps only the initial and final snapshots.
    pub snapshot_every: u64,
    /// Keep one [`StepRecord`] per step.
    pub record_steps: bool,
}

impl LearnerConfig {
    pub fn new(steps: u64, seed: u64) -> Self {
        LearnerConfig {
            steps,
            exploration: ExplorationSchedule::default(),
            seed,
            snapshot_every: 0,
            record_steps: true,
        }
    }
}

/// Forced choices for one step; `None` fields are drawn as usual.
/// Used to replay hand-computed traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOverrides {
    pub next_state: Option<usize>,
    pub policy: Option<Vec<f64>>,
    pub opponent: Option<usize>,
    pub rate: Option<f64>,
    pub next_action: Option<usize>,
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub s: usize,
    pub a: usize,
    pub o: usize,
    pub rate: f64,
    pub q_updated_value: f64,
    /// `f(Q)` after the update; average criterion only.
    pub f_value: Option<f64>,
    pub next_state: usize,
    pub next_action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub q: QTable,
    pub policy: MixedPolicy,
    pub f_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_q: QTable,
    pub final_policy: MixedPolicy,
    pub counts: VisitCounts,
}

/// Learner state: Q, visit counts, the current `(s_k, a_k)` and the step's rng.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub q: QTable,
    pub counts: VisitCounts,
    pub state: usize,
    pub action: usize,
    pub k: u64,
    pub exploration: ExplorationSchedule,
    rng: StreamRng,
}

impl LearnerState {
    /// Starts at the model's initial state with Q = 0 and a uniformly drawn first action.
    pub fn new(model: &TabularModel, exploration: ExplorationSchedule, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Learner, 0);
        let action = rng.gen_range(0..model.dims().actions);
        LearnerState {
            q: QTable::zeros(model.dims()),
            counts: VisitCounts::zeros(model.dims()),
            state: model.initial_state(),
            action,
            k: 0,
            exploration,
            rng,
        }
    }

    pub fn with_action(mut self, action: usize) -> Self {
        self.action = action;
        self
    }

    /// One learner iteration under the model's criterion.
    pub fn step(&mut self, model: &TabularModel, overrides: &StepOverrides) -> Result<StepRecord> {
        match model.criterion() {
            Criterion::Discounted(gamma) => self.step_discounted(model, gamma, overrides),
            Criterion::Average => self.step_average(model, overrides),
        }
    }

    fn next_state(&mut self, model: &TabularModel, overrides: &StepOverrides) -> usize {
        match overrides.next_state {
            Some(s) => s,
            None => sample_transition(model, self.state, self.action, &mut self.rng),
        }
    }

    /// Lexicographically first tight column, replaced with probability ε by a
    /// uniform draw over all opponent actions.
    fn pick_opponent(&mut self, solution: &RowSolution, overrides: &StepOverrides) -> usize {
        if let Some(o) = overrides.opponent {
            return o;
        }
        let eps = self.exploration.eps(self.k);
        let n = solution.column_payoffs.len();
        if eps > 0.0 && self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..n)
        } else {
            solution.tight_columns[0]
        }
    }

    /// `a_{k+1} ~ (1 - ε) π + ε · uniform`.
    fn pick_action(&mut self, policy: &[f64], overrides: &StepOverrides) -> usize {
        if let Some(a) = overrides.next_action {
            return a;
        }
        let eps = self.exploration.eps(self.k);
        if eps > 0.0 && self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..policy.len())
        } else {
            sample_index(policy, self.rng.gen::<f64>())
        }
    }

    fn advance(&mut self, next_state: usize, next_action: usize) {
        self.state = next_state;
        self.action = next_action;
        self.k += 1;
    }
}

/// Per-state maximin policy of `Q[s][·][·]`.
pub fn greedy_policy(q: &QTable) -> Result<MixedPolicy> {
    let rows = (0..q.dims().states)
        .map(|s| maximin_row(&q.state_matrix(s)).map(|sol| sol.row_strategy))
        .collect::<Result<Vec<_>>>()?;
    MixedPolicy::from_rows(rows)
}

pub(crate) fn run_loop(model: &TabularModel, config: &LearnerConfig) -> Result<RunTrace> {
    config.exploration.check()?;
    let mut learner = LearnerState::new(model, config.exploration, config.seed);
    let average = model.criterion().is_average();
    let snapshot = |l: &LearnerState| -> Result<Snapshot> {
        Ok(Snapshot {
            step: l.k,
            q: l.q.clone(),
            policy: greedy_policy(&l.q)?,
            f_value: average.then(|| f_mean(&l.q)),
        })
    };
    let mut snapshots = vec![snapshot(&learner)?];
    let mut records = Vec::new();
    let none = StepOverrides::default();
    for _ in 0..config.steps {
        let record = learner.step(model, &none)?;
        if config.record_steps {
            records.push(record);
        }
        if config.snapshot_every > 0 && learner.k.is_multiple_of(config.snapshot_every) {
            snapshots.push(snapshot(&learner)?);
        }
    }
    if snapshots.last().map(|s| s.step) != Some(learner.k) {
        snapshots.push(snapshot(&learner)?);
    }
    let final_policy = snapshots.last().expect("at least one snapshot").policy.clone();
    Ok(RunTrace { records, snapshots, final_q: learner.q, final_policy, counts: learner.counts })
}

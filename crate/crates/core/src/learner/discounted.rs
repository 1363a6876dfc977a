use super::{run_loop, LearnerConfig, LearnerState, RunTrace, StepOverrides, StepRecord};
use crate::error::{Error, Result};
use crate::matrix_game::maximin_row;
use crate::model::{expected_q_unchecked, TabularModel};

/// Per-triple learning rate `1 / (1 + N(s, a, o))`, `N` counted before the update.
pub fn alpha_schedule(count: u64) -> f64 {
    1.0 / (1.0 + count as f64)
}

impl LearnerState {
    pub(super) fn step_discounted(
        &mut self,
        model: &TabularModel,
        gamma: f64,
        overrides: &StepOverrides,
    ) -> Result<StepRecord> {
        let (s, a) = (self.state, self.action);
        let next = self.next_state(model, overrides);
        let solution = maximin_row(&self.q.state_matrix(next))?;
        let policy = overrides.policy.clone().unwrap_or_else(|| solution.row_strategy.clone());
        let o = self.pick_opponent(&solution, overrides);

        let n = self.counts.get(s, a, o);
        let alpha = overrides.rate.unwrap_or_else(|| alpha_schedule(n));
        self.counts.increment(s, a, o);
        let continuation = expected_q_unchecked(&self.q, next, &policy)[o];
        let target = model.reward(s, a, o) + gamma * continuation;
        let updated = (1.0 - alpha) * self.q.get(s, a, o) + alpha * target;
        self.q.set(s, a, o, updated);

        let next_action = self.pick_action(&policy, overrides);
        let record = StepRecord {
            step: self.k,
            s,
            a,
            o,
            rate: alpha,
            q_updated_value: updated,
            f_value: None,
            next_state: next,
            next_action,
        };
        self.advance(next, next_action);
        Ok(record)
    }
}

/// Runs the discounted learner for `config.steps` iterations.
pub fn run_discounted(model: &TabularModel, config: &LearnerConfig) -> Result<RunTrace> {
    if model.criterion().gamma().is_none() {
        return Err(Error::CriterionMismatch { expected: "discounted" });
    }
    run_loop(model, config)
}

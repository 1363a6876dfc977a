use super::{run_loop, LearnerConfig, LearnerState, RunTrace, StepOverrides, StepRecord, DIVERGENCE_BOUND};
use crate::error::{Error, Result};
use crate::matrix_game::maximin_row;
use crate::model::{expected_q_unchecked, QTable, TabularModel};

/// Mean of all Q entries; the reference value subtracted in every update.
pub fn f_mean(q: &QTable) -> f64 {
    let v = q.values();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `1 / t` for the `t`-th visit of a triple.
pub fn beta_schedule(t: u64) -> f64 {
    assert!(t >= 1, "visit index starts at 1");
    1.0 / t as f64
}

impl LearnerState {
    pub(super) fn step_average(&mut self, model: &TabularModel, overrides: &StepOverrides) -> Result<StepRecord> {
        let (s, a) = (self.state, self.action);
        let next = self.next_state(model, overrides);
        // The immediate reward of (s_k, a_k) enters the game column by column.
        let game = self.q.state_matrix(next).with_column_shift(model.reward_row(s, a));
        let solution = maximin_row(&game)?;
        let policy = overrides.policy.clone().unwrap_or_else(|| solution.row_strategy.clone());
        let o = self.pick_opponent(&solution, overrides);

        let y = model.reward(s, a, o) + expected_q_unchecked(&self.q, next, &policy)[o] - f_mean(&self.q);
        let t = self.counts.increment(s, a, o);
        let beta = overrides.rate.unwrap_or_else(|| beta_schedule(t));
        let updated = (1.0 - beta) * self.q.get(s, a, o) + beta * y;
        if !updated.is_finite() || updated.abs() > DIVERGENCE_BOUND {
            return Err(Error::Diverged { step: self.k, magnitude: updated.abs() });
        }
        self.q.set(s, a, o, updated);

        let next_action = self.pick_action(&policy, overrides);
        let record = StepRecord {
            step: self.k,
            s,
            a,
            o,
            rate: beta,
            q_updated_value: updated,
            f_value: Some(f_mean(&self.q)),
            next_state: next,
            next_action,
        };
        self.advance(next, next_action);
        Ok(record)
    }
}

/// Runs the average-reward learner; snapshots carry `f(Q)` as the gain estimate.
pub fn run_average(model: &TabularModel, config: &LearnerConfig) -> Result<RunTrace> {
    if !model.criterion().is_average() {
        return Err(Error::CriterionMismatch { expected: "average" });
    }
    run_loop(model, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ExplorationSchedule;
    use crate::model::{Criterion, Dims};

    fn one_state(rewards: Vec<f64>, actions: usize, opponents: usize) -> TabularModel {
        TabularModel::new(
            Dims::new(1, actions, opponents),
            vec![1.0; actions],
            rewards,
            Criterion::Average,
            0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn f_mean_examples() {
        let d = Dims::new(2, 2, 2);
        assert_eq!(f_mean(&QTable::zeros(d)), 0.0);
        assert_eq!(f_mean(&QTable::filled(d, 3.5)), 3.5);
        let q = QTable::from_values(d, (1..=8).map(f64::from).collect()).unwrap();
        assert_eq!(f_mean(&q), 4.5);
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_schedule(1), 1.0);
        assert_eq!(beta_schedule(4), 0.25);
        let mut prev = f64::INFINITY;
        for t in 1..=1_000_000 {
            let b = beta_schedule(t);
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn zero_game_stays_zero() {
        let model = one_state(vec![0.0; 4], 2, 2);
        let mut l = LearnerState::new(&model, ExplorationSchedule::default(), 3);
        for _ in 0..100 {
            l.step(&model, &StepOverrides::default()).unwrap();
        }
        assert_eq!(l.q.max_abs(), 0.0);
    }

    #[test]
    fn reward_enters_the_maximin() {
        // Q[s'] alone prefers column 0 as the minimizer (tight at 0); adding
        // R(s_k, a_k, ·) = (5, 0) moves the minimizer to column 1.
        let model = one_state(vec![5.0, 0.0, 5.0, 0.0], 2, 2);
        let mut l = LearnerState::new(&model, ExplorationSchedule::none(), 0).with_action(0);
        l.q = QTable::from_values(model.dims(), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let without_reward = maximin_row(&l.q.state_matrix(0)).unwrap();
        assert_eq!(without_reward.tight_columns, vec![0]);
        let rec = l.step(&model, &StepOverrides::default()).unwrap();
        assert_eq!(rec.o, 1);
    }

    #[test]
    fn counts_sum_to_steps() {
        let model = one_state(vec![1.0, -1.0, -1.0, 1.0], 2, 2);
        let mut l = LearnerState::new(&model, ExplorationSchedule::default(), 9);
        for k in 1..=500 {
            let before = l.q.clone();
            l.step(&model, &StepOverrides::default()).unwrap();
            assert_eq!(l.counts.total(), k);
            let changed = before.values().iter().zip(l.q.values()).filter(|(x, y)| x != y).count();
            assert!(changed <= 1);
        }
    }

    #[test]
    fn discounted_model_is_rejected() {
        let model = one_state(vec![0.0; 4], 2, 2).with_criterion(Criterion::Discounted(0.5));
        assert!(run_average(&model, &LearnerConfig::new(1, 1)).is_err());
    }
}

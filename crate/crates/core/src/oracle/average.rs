use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{f_mean, greedy_policy};
use crate::matrix_game::maximin_row;
use crate::model::{expected_q_unchecked, span, MixedPolicy, QTable, TabularModel};

pub const RVI_DAMPING: f64 = 0.5;

/// `(T'Q)(s, a, o) = Σ_{s+} P(s, a, s+) [R(s, a, o) + E Q(s+, π, o)] - f_value`, where `π`
/// solves the game `R(s, a, o') + Q(s+, ·, o')` over columns `o'`.
pub fn apply_t_average(model: &TabularModel, q: &QTable, f_value: f64) -> Result<QTable> {
    if !model.criterion().is_average() {
        return Err(Error::CriterionMismatch { expected: "average" });
    }
    let d = model.dims();
    if q.dims() != d {
        return Err(Error::ShapeMismatch("Q and model dimensions differ".into()));
    }
    let blocks: Vec<_> = (0..d.states).map(|s| q.state_matrix(s)).collect();
    let mut out = QTable::zeros(d);
    for s in 0..d.states {
        for a in 0..d.actions {
            let reward = model.reward_row(s, a);
            let mut cont = vec![0.0; d.opponents];
            for (next, &p) in model.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let sol = maximin_row(&blocks[next].with_column_shift(reward))?;
                let h = expected_q_unchecked(q, next, &sol.row_strategy);
                for (c, hv) in cont.iter_mut().zip(h) {
                    *c += p * hv;
                }
            }
            for o in 0..d.opponents {
                out.set(s, a, o, reward[o] + cont[o] - f_value);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSolution {
    pub q_star: QTable,
    /// Gain per opponent action: mean over `(s, a)` of `T(Q*) - Q*`.
    pub v_star: Vec<f64>,
    /// `f(Q*)`, the scalar the iteration anchors on.
    pub anchor: f64,
    /// `H*(s, o) = Σ_a π*(s)(a) Q*(s, a, o)`.
    pub h_star: Vec<Vec<f64>>,
    pub policy: MixedPolicy,
    /// Span of `T(Q*) - f(Q*) - Q*`.
    pub residual: f64,
    pub sweeps: usize,
}

/// Damped relative value iteration `Q <- (1 - η) Q + η (T(Q) - f(Q))` from `Q = 0`,
/// stopped when both the span and the sup norm of the increment are at most `tol`.
pub fn rvi_average(model: &TabularModel, tol: f64, budget: usize) -> Result<AverageSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be positive".into() });
    }
    let mut q = QTable::zeros(model.dims());
    let mut last = f64::INFINITY;
    for sweep in 1..=budget {
        let t = apply_t_average(model, &q, f_mean(&q))?;
        let increment: Vec<f64> = t.values().iter().zip(q.values()).map(|(t, q)| RVI_DAMPING * (t - q)).collect();
        for (v, inc) in q.values_mut().iter_mut().zip(&increment) {
            *v += inc;
        }
        if !q.is_finite() || q.max_abs() > crate::learner::DIVERGENCE_BOUND {
            return Err(Error::Diverged { step: sweep as u64, magnitude: q.max_abs() });
        }
        // The span alone leaves the uniform part of the increment unchecked.
        last = span(&increment).max(increment.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        if last <= tol {
            return summarize(model, q, sweep);
        }
    }
    Err(Error::IterationBudgetExceeded { budget, last_increment: last })
}

fn summarize(model: &TabularModel, q: QTable, sweeps: usize) -> Result<AverageSolution> {
    let d = model.dims();
    let anchor = f_mean(&q);
    let t = apply_t_average(model, &q, 0.0)?;
    let gap: Vec<f64> = t.values().iter().zip(q.values()).map(|(t, q)| t - q).collect();
    let mut v_star = vec![0.0; d.opponents];
    for (i, g) in gap.iter().enumerate() {
        v_star[i % d.opponents] += g;
    }
    let cells = (d.states * d.actions) as f64;
    v_star.iter_mut().for_each(|v| *v /= cells);
    let residual = span(&gap);
    let policy = greedy_policy(&q)?;
    let h_star = (0..d.states).map(|s| expected_q_unchecked(&q, s, policy.row(s))).collect();
    Ok(AverageSolution { q_star: q, v_star, anchor, h_star, policy, residual, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Criterion, Dims};

    fn pennies() -> TabularModel {
        TabularModel::new(Dims::new(1, 2, 2), vec![1.0, 1.0], vec![1.0, -1.0, -1.0, 1.0], Criterion::Average, 0, 2.0)
            .unwrap()
    }

    #[test]
    fn zero_q_gives_rewards_minus_f() {
        let m = pennies();
        let t = apply_t_average(&m, &QTable::zeros(m.dims()), 0.25).unwrap();
        assert_eq!(t.values(), &[0.75, -1.25, -1.25, 0.75]);
    }

    #[test]
    fn hand_evaluated_application() {
        // Row a = 0 plays the game [[1.5, -1.5], [0.5, -0.5]]: row 1 wins, H = Q[1] = (-0.5, 0.5).
        let m = pennies();
        let q = QTable::from_values(m.dims(), vec![0.5, -0.5, -0.5, 0.5]).unwrap();
        let t = apply_t_average(&m, &q, 0.0).unwrap();
        assert!(t.sup_distance(&q) < 1e-12);
    }

    #[test]
    fn shift_passes_through_without_anchor() {
        let m = pennies();
        let q = QTable::from_values(m.dims(), vec![0.3, -0.1, 0.2, 0.4]).unwrap();
        let lhs = apply_t_average(&m, &q.shifted(2.0), 0.0).unwrap();
        let rhs = apply_t_average(&m, &q, 0.0).unwrap().shifted(2.0);
        assert!(lhs.sup_distance(&rhs) < 1e-12);
    }

    #[test]
    fn pennies_gain_is_zero() {
        let sol = rvi_average(&pennies(), 1e-10, 100_000).unwrap();
        assert!(sol.v_star.iter().all(|v| v.abs() < 1e-8));
        assert!((sol.policy.prob(0, 0) - 0.5).abs() < 1e-8);
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn uncontrolled_reward_gain_is_stationary_mean() {
        // Two-state chain, reward depends on the state only: stationary (2/3, 1/3).
        let p = vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.0, 1.0, 0.0];
        let r = vec![3.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        let m = TabularModel::new(Dims::new(2, 2, 2), p, r, Criterion::Average, 0, 3.0).unwrap();
        let sol = rvi_average(&m, 1e-10, 100_000).unwrap();
        for v in &sol.v_star {
            assert!((v - 2.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn h_star_matches_policy_expectation() {
        let sol = rvi_average(&pennies(), 1e-10, 100_000).unwrap();
        for (o, h) in sol.h_star[0].iter().enumerate() {
            let direct: f64 = (0..2).map(|a| sol.policy.prob(0, a) * sol.q_star.get(0, a, o)).sum();
            assert!((h - direct).abs() < 1e-12);
        }
    }
}

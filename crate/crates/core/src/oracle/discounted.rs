use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::greedy_policy;
use crate::matrix_game::maximin_row;
use crate::model::{expected_q_unchecked, MixedPolicy, QTable, TabularModel};

pub const DEFAULT_SWEEP_BUDGET: usize = 100_000;

fn discount(model: &TabularModel) -> Result<f64> {
    model.criterion().gamma().ok_or(Error::CriterionMismatch { expected: "discounted" })
}

/// `H(s, o) = Σ_a π_Q(s)(a) Q(s, a, o)` with `π_Q(s)` the maximin strategy of `Q[s]`.
pub(crate) fn maximin_continuation(q: &QTable) -> Result<Vec<Vec<f64>>> {
    (0..q.dims().states)
        .map(|s| {
            let sol = maximin_row(&q.state_matrix(s))?;
            Ok(expected_q_unchecked(q, s, &sol.row_strategy))
        })
        .collect()
}

/// `(TQ)(s, a, o) = R(s, a, o) + γ Σ_{s+} P(s, a, s+) H(s+, o)`.
pub fn apply_t_discounted(model: &TabularModel, q: &QTable) -> Result<QTable> {
    let gamma = discount(model)?;
    let d = model.dims();
    if q.dims() != d {
        return Err(Error::ShapeMismatch("Q and model dimensions differ".into()));
    }
    let h = maximin_continuation(q)?;
    let mut out = QTable::zeros(d);
    for s in 0..d.states {
        for a in 0..d.actions {
            let row = model.transition_row(s, a);
            for o in 0..d.opponents {
                let cont: f64 = row.iter().zip(&h).map(|(p, hs)| p * hs[o]).sum();
                out.set(s, a, o, model.reward(s, a, o) + gamma * cont);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub q: QTable,
    pub policy: MixedPolicy,
    pub sweeps: usize,
}

/// Iterates `T` from `Q = 0` until the sweep increment is at most
/// `tol (1 - γ) / γ`.
pub fn fixed_point_discounted(model: &TabularModel, tol: f64, budget: usize) -> Result<DiscountedSolution> {
    let gamma = discount(model)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be positive".into() });
    }
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { f64::INFINITY };
    let mut q = QTable::zeros(model.dims());
    let mut last = f64::INFINITY;
    for sweep in 1..=budget {
        let next = apply_t_discounted(model, &q)?;
        last = next.sup_distance(&q);
        q = next;
        if last <= stop {
            let policy = greedy_policy(&q)?;
            return Ok(DiscountedSolution { q, policy, sweeps: sweep });
        }
    }
    Err(Error::IterationBudgetExceeded { budget, last_increment: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{assemble_game, build_queue, build_static_example, QueueParams, StaticExample};

    fn example(which: StaticExample) -> TabularModel {
        assemble_game(&build_static_example(which)).unwrap()
    }

    #[test]
    fn zero_q_maps_to_rewards() {
        let m = example(StaticExample::Example1);
        let t = apply_t_discounted(&m, &QTable::zeros(m.dims())).unwrap();
        assert_eq!(t.values(), m.rewards_flat());
    }

    #[test]
    fn example1_fixed_point() {
        let m = example(StaticExample::Example1);
        let star = QTable::from_values(m.dims(), vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        assert!(apply_t_discounted(&m, &star).unwrap().sup_distance(&star) < 1e-12);
        let sol = fixed_point_discounted(&m, 1e-10, DEFAULT_SWEEP_BUDGET).unwrap();
        assert!(sol.q.sup_distance(&star) <= 1e-9);
        assert!((sol.policy.prob(0, 0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn example2_uniform_policy_value_zero() {
        let m = example(StaticExample::Example2);
        let sol = fixed_point_discounted(&m, 1e-10, DEFAULT_SWEEP_BUDGET).unwrap();
        for a in 0..3 {
            assert!((sol.policy.prob(0, a) - 1.0 / 3.0).abs() < 1e-9);
        }
        let v = maximin_row(&sol.q.state_matrix(0)).unwrap().value;
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn constant_shift_is_affine() {
        let m = example(StaticExample::Example1);
        let q = QTable::from_values(m.dims(), vec![0.2, -0.4, 0.9, 0.1]).unwrap();
        let lhs = apply_t_discounted(&m, &q.shifted(3.0)).unwrap();
        let rhs = apply_t_discounted(&m, &q).unwrap().shifted(0.5 * 3.0);
        assert!(lhs.sup_distance(&rhs) < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let m = assemble_game(&build_queue(&QueueParams::default()).unwrap()).unwrap();
        assert!(matches!(
            fixed_point_discounted(&m, 1e-12, 2),
            Err(Error::IterationBudgetExceeded { budget: 2, .. })
        ));
    }
}

//! Model-known solvers: the discounted fixed point, relative value iteration,
//! the occupancy-measure LP and the game-value feasibility test.

mod average;
mod discounted;
mod lp;

pub use average::{apply_t_average, rvi_average, AverageSolution, RVI_DAMPING};
pub use discounted::{apply_t_discounted, fixed_point_discounted, DiscountedSolution, DEFAULT_SWEEP_BUDGET};
pub use lp::{cmdp_lp_discounted, LpResult};

use crate::error::Result;
use crate::learner::f_mean;
use crate::matrix_game::maximin_row;
use crate::model::{Criterion, TabularModel};

/// Game value at the initial state: `min_o E Q*(s0, π*(s0), o)` for discounted
/// games, `f(Q*)` from relative value iteration for average ones. The
/// constrained problem behind the game is feasible iff this is `>= 0`.
pub fn feasibility_value(game: &TabularModel, tol: f64) -> Result<f64> {
    match game.criterion() {
        Criterion::Discounted(_) => {
            let sol = fixed_point_discounted(game, tol, DEFAULT_SWEEP_BUDGET)?;
            Ok(maximin_row(&sol.q.state_matrix(game.initial_state()))?.value)
        }
        Criterion::Average => Ok(f_mean(&rvi_average(game, tol, DEFAULT_SWEEP_BUDGET)?.q_star)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{assemble_game, build_static_example, example2_with_target, StaticExample};
    use crate::model::Dims;

    #[test]
    fn static_examples_sit_on_the_boundary() {
        for which in [StaticExample::Example1, StaticExample::Example2] {
            let v = feasibility_value(&assemble_game(&build_static_example(which)).unwrap(), 1e-10).unwrap();
            assert!(v.abs() < 1e-9, "{which:?}: {v}");
        }
    }

    #[test]
    fn overdemanding_example2_is_negative() {
        let v = feasibility_value(&assemble_game(&example2_with_target(0.4)).unwrap(), 1e-10).unwrap();
        assert!(v < -1e-3);
    }

    #[test]
    fn all_ones_game_has_value_one() {
        let m = TabularModel::new(Dims::new(1, 2, 2), vec![1.0, 1.0], vec![1.0; 4], Criterion::Discounted(0.5), 0, 1.0)
            .unwrap();
        // Q* = 1 / (1 - γ) = 2 for the discounted sum; the value is its maximin.
        assert!((feasibility_value(&m, 1e-10).unwrap() - 2.0).abs() < 1e-9);
    }
}

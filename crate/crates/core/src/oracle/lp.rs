use serde::{Deserialize, Serialize};

use crate::environments::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::model::MixedPolicy;
use crate::simplex::{LinearProgram, LpOutcome, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub feasible: bool,
    /// Discounted objective value `Σ ρ r⁰ / (1 - γ)`; `None` without objective or when infeasible.
    pub value: Option<f64>,
    /// Normalized occupancy `ρ(s, a)`, row-major; empty when infeasible.
    pub occupancy: Vec<f64>,
    pub policy: MixedPolicy,
    /// `Σ ρ rʲ / (1 - γ)` per constraint.
    pub constraint_values: Vec<f64>,
}

/// Occupancy-measure LP of a discounted CMDP started in its initial state.
/// With `maximize_objective` the objective reward is maximized; otherwise
/// only feasibility is decided.
pub fn cmdp_lp_discounted(problem: &ConstrainedProblem, maximize_objective: bool) -> Result<LpResult> {
    let gamma = problem.criterion().gamma().ok_or(Error::CriterionMismatch { expected: "discounted" })?;
    let (ns, na) = (problem.states(), problem.actions());
    let n = ns * na;
    let scale = 1.0 / (1.0 - gamma);
    let objective = match (maximize_objective, problem.objective()) {
        (true, Some(r)) => r.iter().map(|v| v * scale).collect(),
        (true, None) => return Err(Error::MissingObjective),
        (false, _) => vec![0.0; n],
    };
    let mut lp = LinearProgram::maximize(objective);
    for next in 0..ns {
        let mut row = vec![0.0; n];
        for a in 0..na {
            row[next * na + a] += 1.0;
        }
        for s in 0..ns {
            for a in 0..na {
                row[s * na + a] -= gamma * problem.transition_row(s, a)[next];
            }
        }
        let mu = if next == problem.initial_state() { 1.0 } else { 0.0 };
        lp.add_constraint(row, Relation::Eq, (1.0 - gamma) * mu);
    }
    for r in problem.constraints() {
        lp.add_constraint(r.iter().map(|v| v * scale).collect(), Relation::Ge, 0.0);
    }
    let solution = match lp.solve() {
        Ok(LpOutcome::Optimal(s)) => s,
        Ok(LpOutcome::Infeasible) => {
            return Ok(LpResult {
                feasible: false,
                value: None,
                occupancy: Vec::new(),
                policy: MixedPolicy::uniform(ns, na),
                constraint_values: Vec::new(),
            })
        }
        Err(Error::Unbounded) => unreachable!("occupancy polytope is bounded"),
        Err(e) => return Err(e),
    };
    let rho = solution.x;
    let rows = (0..ns)
        .map(|s| {
            let block = &rho[s * na..(s + 1) * na];
            let mass: f64 = block.iter().sum();
            if mass > 1e-12 {
                block.iter().map(|v| v / mass).collect()
            } else {
                vec![1.0 / na as f64; na]
            }
        })
        .collect();
    let dot = |r: &[f64]| r.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * scale;
    Ok(LpResult {
        feasible: true,
        value: if maximize_objective { problem.objective().map(dot) } else { None },
        constraint_values: problem.constraints().iter().map(|r| dot(r)).collect(),
        policy: MixedPolicy::from_rows(rows)?,
        occupancy: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{build_static_example, example2_with_target, StaticExample};
    use crate::model::Criterion;

    #[test]
    fn example2_is_feasible_with_uniform_policy() {
        let r = cmdp_lp_discounted(&build_static_example(StaticExample::Example2), false).unwrap();
        assert!(r.feasible);
        for a in 0..3 {
            assert!((r.policy.prob(0, a) - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!((r.occupancy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn example2_overdemanding_targets_are_infeasible() {
        assert!(!cmdp_lp_discounted(&example2_with_target(0.4), false).unwrap().feasible);
    }

    #[test]
    fn no_constraints_solves_the_plain_mdp() {
        // Two states; action 1 moves to the rewarding state 1 and stays.
        let p = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let r0 = vec![0.0, 0.0, 1.0, 1.0];
        let problem = ConstrainedProblem::new(2, 2, p, Criterion::Discounted(0.5), 0, vec![], Some(r0)).unwrap();
        let res = cmdp_lp_discounted(&problem, true).unwrap();
        assert!(res.feasible);
        // 0 + 0.5 + 0.25 + ... = 1
        assert!((res.value.unwrap() - 1.0).abs() < 1e-9);
        assert!((res.policy.prob(0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn objective_requires_an_objective() {
        let p = build_static_example(StaticExample::Example1);
        assert_eq!(cmdp_lp_discounted(&p, true), Err(Error::MissingObjective));
    }
}

//! Experimental models, the constraint-to-game assembly, reward shifting and
//! transition sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, Criterion, Dims, TabularModel, PROB_TOL};

/// A constrained MDP: find a policy whose expected (discounted or average)
/// reward is nonnegative for every constraint reward `r^j(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedProblem {
    states: usize,
    actions: usize,
    transitions: Vec<f64>,
    criterion: Criterion,
    initial_state: usize,
    constraints: Vec<Vec<f64>>,
    objective: Option<Vec<f64>>,
    action_labels: Vec<String>,
}

impl ConstrainedProblem {
    /// `transitions` is `[s][a][s+]`, every reward vector is `[s][a]`.
    pub fn new(
        states: usize,
        actions: usize,
        transitions: Vec<f64>,
        criterion: Criterion,
        initial_state: usize,
        constraints: Vec<Vec<f64>>,
        objective: Option<Vec<f64>>,
    ) -> Result<Self> {
        let sa = states * actions;
        if sa == 0 || transitions.len() != sa * states {
            return Err(Error::ShapeMismatch(format!(
                "P has {} entries for {states} states and {actions} actions",
                transitions.len()
            )));
        }
        if initial_state >= states {
            return Err(Error::ShapeMismatch(format!("initial state {initial_state} out of range")));
        }
        for (j, r) in constraints.iter().chain(objective.iter()).enumerate() {
            if r.len() != sa {
                return Err(Error::ShapeMismatch(format!("reward {j} has {} entries, expected {sa}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter { name: "rewards", reason: format!("reward {j} is not finite") });
            }
        }
        for (i, row) in transitions.chunks(states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidParameter {
                    name: "transitions",
                    reason: format!("row (s={}, a={}) is not a distribution", i / actions, i % actions),
                });
            }
        }
        let action_labels = (0..actions).map(|a| a.to_string()).collect();
        Ok(ConstrainedProblem {
            states,
            actions,
            transitions,
            criterion,
            initial_state,
            constraints,
            objective,
            action_labels,
        })
    }

    pub fn with_action_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.actions);
        self.action_labels = labels;
        self
    }

    /// Recovers the constrained problem behind a game built by [`assemble_game`]:
    /// opponent column `j` becomes constraint reward `j`.
    pub fn from_game(model: &TabularModel) -> Result<Self> {
        let d = model.dims();
        let constraints = (0..d.opponents)
            .map(|o| {
                let mut r = Vec::with_capacity(d.states * d.actions);
                for s in 0..d.states {
                    for a in 0..d.actions {
                        r.push(model.reward(s, a, o));
                    }
                }
                r
            })
            .collect();
        ConstrainedProblem::new(
            d.states,
            d.actions,
            model.transitions_flat().to_vec(),
            model.criterion(),
            model.initial_state(),
            constraints,
            None,
        )
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transitions[start..start + self.states]
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> Option<&[f64]> {
        self.objective.as_deref()
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    /// Largest absolute reward over constraints and objective (1 if all zero).
    pub fn reward_bound(&self) -> f64 {
        let c = self
            .constraints
            .iter()
            .chain(self.objective.iter())
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if c > 0.0 {
            c
        } else {
            1.0
        }
    }

    pub fn with_criterion(&self, criterion: Criterion) -> Self {
        ConstrainedProblem { criterion, ..self.clone() }
    }

    pub fn without_objective(&self) -> Self {
        ConstrainedProblem { objective: None, ..self.clone() }
    }
}

/// Markov-Bandit game with `O = [J]` and `R(s, a, j) = r^j(s, a)`.
/// The reward bound is `2c`.
pub fn assemble_game(problem: &ConstrainedProblem) -> Result<TabularModel> {
    let j_count = problem.constraints.len();
    if j_count == 0 {
        return Err(Error::InvalidParameter {
            name: "constraints",
            reason: "a game needs at least one constraint reward".into(),
        });
    }
    let dims = Dims::new(problem.states, problem.actions, j_count);
    let mut rewards = vec![0.0; dims.len()];
    for s in 0..problem.states {
        for a in 0..problem.actions {
            for (j, r) in problem.constraints.iter().enumerate() {
                rewards[dims.index(s, a, j)] = r[s * problem.actions + a];
            }
        }
    }
    let model = TabularModel::new(
        dims,
        problem.transitions.clone(),
        rewards,
        problem.criterion,
        problem.initial_state,
        2.0 * problem.reward_bound(),
    )?;
    validate_model(&model).into_result()?;
    Ok(model)
}

/// Turns the objective into the constraint "objective value >= δ" and
/// appends it after the existing constraints. Discounted problems subtract
/// `(1 - γ) δ` per step, average problems subtract `δ`.
pub fn shift_rewards(problem: &ConstrainedProblem, delta: f64) -> Result<ConstrainedProblem> {
    let objective = problem.objective.as_ref().ok_or(Error::MissingObjective)?;
    let per_step = match problem.criterion {
        Criterion::Discounted(g) => (1.0 - g) * delta,
        Criterion::Average => delta,
    };
    let mut out = problem.clone();
    out.constraints.push(objective.iter().map(|r| r - per_step).collect());
    out.objective = None;
    Ok(out)
}

/// The two single-state examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticExample {
    /// Two actions, two opposed constraints (matching pennies).
    Example1,
    /// Three actions, three constraints with target 1/3 each.
    Example2,
}

const STATIC_GAMMA: f64 = 0.5;

pub fn build_static_example(which: StaticExample) -> ConstrainedProblem {
    match which {
        StaticExample::Example1 => ConstrainedProblem::new(
            1,
            2,
            vec![1.0, 1.0],
            Criterion::Discounted(STATIC_GAMMA),
            0,
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            None,
        )
        .expect("static example is well formed"),
        StaticExample::Example2 => example2_with_target(1.0 / 3.0),
    }
}

/// Example 2 with discounted target `target` on every constraint, folded into
/// the rewards as `r^j(a) - (1 - γ) target`.
pub fn example2_with_target(target: f64) -> ConstrainedProblem {
    let shift = (1.0 - STATIC_GAMMA) * target;
    let constraints = (0..3)
        .map(|j| (0..3).map(|a| if a == j { 0.5 } else { 0.0 } - shift).collect())
        .collect();
    ConstrainedProblem::new(1, 3, vec![1.0; 3], Criterion::Discounted(STATIC_GAMMA), 0, constraints, None)
        .expect("static example is well formed")
}

/// Parameters of the discrete-time single-server queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueParams {
    /// Buffer size; states are `0..=buffer`.
    pub buffer: usize,
    /// Service success probabilities.
    pub service: Vec<f64>,
    /// Arrival probabilities.
    pub flow: Vec<f64>,
    pub gamma: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            buffer: 5,
            service: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            flow: vec![0.0, 0.2, 0.4, 0.6],
            gamma: 0.5,
        }
    }
}

/// `P(x+ | x, a, b)` for the three row cases: empty queue, interior, full.
pub fn queue_transition_row(x: usize, buffer: usize, a: f64, b: f64) -> Vec<f64> {
    let mut row = vec![0.0; buffer + 1];
    if x == 0 {
        row[0] = 1.0 - b * (1.0 - a);
        if buffer > 0 {
            row[1] = b * (1.0 - a);
        }
    } else if x == buffer {
        row[x - 1] = a;
        row[x] = 1.0 - a;
    } else {
        row[x - 1] = a * (1.0 - b);
        row[x] = a * b + (1.0 - a) * (1.0 - b);
        row[x + 1] = (1.0 - a) * b;
    }
    row
}

/// Queue with objective reward `5 - s`, service constraint `5 - 10a` and
/// flow constraint `2 - 5(1 - b)^2`, all to be kept `>= 0` (costs negated).
/// Action index is `service_index * |flow| + flow_index`; the queue starts empty.
pub fn build_queue(params: &QueueParams) -> Result<ConstrainedProblem> {
    let QueueParams { buffer, service, flow, gamma } = params;
    if *buffer == 0 {
        return Err(Error::InvalidParameter { name: "buffer", reason: "must be at least 1".into() });
    }
    if service.is_empty() || service.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidParameter { name: "service", reason: "values must lie in (0, 1)".into() });
    }
    if flow.is_empty() || flow.iter().any(|&b| !(0.0..1.0).contains(&b)) {
        return Err(Error::InvalidParameter { name: "flow", reason: "values must lie in [0, 1)".into() });
    }
    if !(*gamma > 0.0 && *gamma < 1.0) {
        return Err(Error::InvalidParameter { name: "gamma", reason: "must lie in (0, 1)".into() });
    }
    let states = buffer + 1;
    let actions = service.len() * flow.len();
    let mut transitions = Vec::with_capacity(states * actions * states);
    let mut objective = Vec::with_capacity(states * actions);
    let mut service_reward = Vec::with_capacity(states * actions);
    let mut flow_reward = Vec::with_capacity(states * actions);
    for x in 0..states {
        for &a in service {
            for &b in flow {
                transitions.extend(queue_transition_row(x, *buffer, a, b));
                objective.push(5.0 - x as f64);
                service_reward.push(5.0 - 10.0 * a);
                flow_reward.push(2.0 - 5.0 * (1.0 - b) * (1.0 - b));
            }
        }
    }
    let labels = service
        .iter()
        .flat_map(|a| flow.iter().map(move |b| format!("a={a},b={b}")))
        .collect();
    Ok(ConstrainedProblem::new(
        states,
        actions,
        transitions,
        Criterion::Discounted(*gamma),
        0,
        vec![service_reward, flow_reward],
        Some(objective),
    )?
    .with_action_labels(labels))
}

/// Index drawn from a distribution by inverse CDF on the single uniform `u`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws `s+ ~ P[s][a][·]`.
pub fn sample_transition<R: Rng + ?Sized>(model: &TabularModel, s: usize, a: usize, rng: &mut R) -> usize {
    sample_index(model.transition_row(s, a), rng.gen::<f64>())
}

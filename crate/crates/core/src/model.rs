//! Tabular Markov-Bandit games.
//!
//! A game is a finite MDP `(S, A, P)` together with an opponent action set
//! `O` that enters only the reward `R(s, a, o)`. The opponent commits to one
//! column for the whole run and never affects the transitions, which is why
//! `P` is stored as `[s][a][s+]` with no opponent axis.
//!
//! All indices are dense and 0-based. Tensors are stored flat in row-major
//! order so that `Q[s]` is a contiguous `|A| x |O|` payoff matrix.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_game::Matrix;

/// Tolerance on transition row sums.
pub const PROB_TOL: f64 = 1e-12;

/// Optimality criterion of the game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Criterion {
    Discounted(f64),
    Average,
}

impl Criterion {
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Criterion::Discounted(g) => Some(g),
            Criterion::Average => None,
        }
    }

    pub fn is_average(&self) -> bool {
        matches!(self, Criterion::Average)
    }
}

/// Sizes of the three index spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub opponents: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, opponents: usize) -> Self {
        Dims { states, actions, opponents }
    }

    pub fn len(&self) -> usize {
        self.states * self.actions * self.opponents
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize, o: usize) -> usize {
        debug_assert!(s < self.states && a < self.actions && o < self.opponents);
        (s * self.actions + a) * self.opponents + o
    }
}

/// A zero-sum Markov-Bandit game with known dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    dims: Dims,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    criterion: Criterion,
    initial_state: usize,
    reward_bound: f64,
}

impl TabularModel {
    /// Builds a model from flat row-major tensors. Only shapes are checked
    /// here; use [`validate_model`] for the probabilistic invariants.
    pub fn new(
        dims: Dims,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        criterion: Criterion,
        initial_state: usize,
        reward_bound: f64,
    ) -> Result<Self> {
        if dims.states == 0 || dims.actions == 0 || dims.opponents == 0 {
            return Err(Error::ShapeMismatch(format!("empty index space {dims:?}")));
        }
        let p_len = dims.states * dims.actions * dims.states;
        if transitions.len() != p_len {
            return Err(Error::ShapeMismatch(format!(
                "P has {} entries, expected {p_len}",
                transitions.len()
            )));
        }
        if rewards.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "R has {} entries, expected {}",
                rewards.len(),
                dims.len()
            )));
        }
        if initial_state >= dims.states {
            return Err(Error::ShapeMismatch(format!(
                "initial state {initial_state} out of range 0..{}",
                dims.states
            )));
        }
        Ok(TabularModel { dims, transitions, rewards, criterion, initial_state, reward_bound })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// Distribution `P[s][a][·]` over successor states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.dims.states;
        let start = (s * self.dims.actions + a) * n;
        &self.transitions[start..start + n]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize, o: usize) -> f64 {
        self.rewards[self.dims.index(s, a, o)]
    }

    /// Reward vector `R[s][a][·]` over opponent actions.
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.dims.index(s, a, 0);
        &self.rewards[start..start + self.dims.opponents]
    }

    pub fn transitions_flat(&self) -> &[f64] {
        &self.transitions
    }

    pub fn rewards_flat(&self) -> &[f64] {
        &self.rewards
    }

    /// Same model with every reward shifted by `shift`.
    pub fn with_reward_shift(&self, shift: f64) -> TabularModel {
        let mut out = self.clone();
        for r in &mut out.rewards {
            *r += shift;
        }
        out.reward_bound = self.reward_bound + shift.abs();
        out
    }

    pub fn with_criterion(&self, criterion: Criterion) -> TabularModel {
        TabularModel { criterion, ..self.clone() }
    }

    /// Renormalizes transition rows whose sum is within [`PROB_TOL`] of one.
    /// Rows further off are left untouched and show up in the validation report.
    pub fn normalize_rows(&mut self) {
        let n = self.dims.states;
        for row in self.transitions.chunks_mut(n) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() <= PROB_TOL && sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    RowSum { state: usize, action: usize, sum: f64 },
    ProbabilityRange { state: usize, action: usize, next: usize, value: f64 },
    RewardBound { state: usize, action: usize, opponent: usize, value: f64, bound: f64 },
    NonFinite { tensor: &'static str, index: usize },
    BadDiscount { gamma: f64 },
    BadBound { bound: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::RowSum { state, action, sum } => {
                write!(f, "P[{state}][{action}] sums to {sum}")
            }
            ValidationIssue::ProbabilityRange { state, action, next, value } => {
                write!(f, "P[{state}][{action}][{next}] = {value} outside [0, 1]")
            }
            ValidationIssue::RewardBound { state, action, opponent, value, bound } => {
                write!(f, "|R[{state}][{action}][{opponent}]| = {} exceeds bound {bound}", value.abs())
            }
            ValidationIssue::NonFinite { tensor, index } => {
                write!(f, "{tensor} has a non-finite entry at flat index {index}")
            }
            ValidationIssue::BadDiscount { gamma } => write!(f, "discount {gamma} not in (0, 1)"),
            ValidationIssue::BadBound { bound } => write!(f, "reward bound {bound} is not positive"),
        }
    }
}

/// Every violated invariant of a model; empty iff the model is well formed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks row sums, probability ranges, the reward bound and finiteness.
/// Never fails; the report lists everything that is wrong.
pub fn validate_model(model: &TabularModel) -> ValidationReport {
    let mut issues = Vec::new();
    let d = model.dims;
    if let Criterion::Discounted(g) = model.criterion {
        if !(g > 0.0 && g < 1.0) {
            issues.push(ValidationIssue::BadDiscount { gamma: g });
        }
    }
    if !(model.reward_bound > 0.0 && model.reward_bound.is_finite()) {
        issues.push(ValidationIssue::BadBound { bound: model.reward_bound });
    }
    for s in 0..d.states {
        for a in 0..d.actions {
            let row = model.transition_row(s, a);
            let mut finite = true;
            for (next, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    finite = false;
                    issues.push(ValidationIssue::NonFinite {
                        tensor: "P",
                        index: (s * d.actions + a) * d.states + next,
                    });
                } else if !(0.0..=1.0).contains(&p) {
                    issues.push(ValidationIssue::ProbabilityRange { state: s, action: a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if finite && (sum - 1.0).abs() > PROB_TOL {
                issues.push(ValidationIssue::RowSum { state: s, action: a, sum });
            }
            for o in 0..d.opponents {
                let r = model.reward(s, a, o);
                if !r.is_finite() {
                    issues.push(ValidationIssue::NonFinite { tensor: "R", index: d.index(s, a, o) });
                } else if r.abs() > model.reward_bound {
                    issues.push(ValidationIssue::RewardBound {
                        state: s,
                        action: a,
                        opponent: o,
                        value: r,
                        bound: model.reward_bound,
                    });
                }
            }
        }
    }
    ValidationReport { issues }
}

/// Connectivity verdicts for the unichain and recurrent-state assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    /// The graph with an edge `s -> s+` whenever some action reaches `s+`
    /// is strongly connected. Necessary for the unichain assumption.
    pub strongly_connected: bool,
    /// Designated state checked for recurrence.
    pub target: usize,
    /// Every deterministic stationary policy reaches `target` from every
    /// state. Computed exactly through the avoidance fixed point, so no
    /// enumeration budget applies.
    pub recurrent_under_all_policies: bool,
    /// States from which some policy avoids `target` forever.
    pub avoiding_states: Vec<usize>,
}

/// Checks strong connectivity of the support graph and whether `target`
/// is reached from everywhere under every stationary policy.
pub fn check_connectivity(model: &TabularModel, target: usize) -> Result<ConnectivityReport> {
    let d = model.dims;
    if target >= d.states {
        return Err(Error::ShapeMismatch(format!("target state {target} out of range")));
    }
    let mut adjacency = vec![vec![false; d.states]; d.states];
    for (s, adj) in adjacency.iter_mut().enumerate() {
        for a in 0..d.actions {
            for (next, &p) in model.transition_row(s, a).iter().enumerate() {
                if p > 0.0 {
                    adj[next] = true;
                }
            }
        }
    }
    let strongly_connected = (0..d.states).all(|start| {
        let mut seen = vec![false; d.states];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(s) = stack.pop() {
            for next in 0..d.states {
                if adjacency[s][next] && !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.iter().all(|&x| x)
    });

    // Attractor of `target`: s joins once every action has a successor
    // already inside. A state outside has an action whose whole support
    // stays outside, and a policy playing those actions never reaches target.
    let mut forced = vec![false; d.states];
    forced[target] = true;
    loop {
        let mut changed = false;
        for s in 0..d.states {
            if forced[s] {
                continue;
            }
            let all_actions_enter = (0..d.actions).all(|a| {
                model
                    .transition_row(s, a)
                    .iter()
                    .enumerate()
                    .any(|(next, &p)| p > 0.0 && forced[next])
            });
            if all_actions_enter {
                forced[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let avoiding_states: Vec<usize> = (0..d.states).filter(|&s| !forced[s]).collect();
    Ok(ConnectivityReport {
        strongly_connected,
        target,
        recurrent_under_all_policies: avoiding_states.is_empty(),
        avoiding_states,
    })
}

/// Learned or solved action values `Q(s, a, o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    dims: Dims,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(dims: Dims) -> Self {
        QTable { dims, values: vec![0.0; dims.len()] }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        QTable { dims, values: vec![value; dims.len()] }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "Q has {} entries, expected {}",
                values.len(),
                dims.len()
            )));
        }
        Ok(QTable { dims, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, o: usize) -> f64 {
        self.values[self.dims.index(s, a, o)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, o: usize, value: f64) {
        let i = self.dims.index(s, a, o);
        self.values[i] = value;
    }

    /// Row-major slice of the `|A| x |O|` block for state `s`.
    pub fn state_slice(&self, s: usize) -> &[f64] {
        let n = self.dims.actions * self.dims.opponents;
        &self.values[s * n..(s + 1) * n]
    }

    /// The payoff matrix `Q[s][a][o]` (rows = agent actions).
    pub fn state_matrix(&self, s: usize) -> Matrix {
        Matrix::from_row_major(self.dims.actions, self.dims.opponents, self.state_slice(s).to_vec())
            .expect("state block has matrix shape")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `max - min` over all entries.
    pub fn span(&self) -> f64 {
        span(&self.values)
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Span seminorm of `self - other`.
    pub fn span_distance(&self, other: &QTable) -> f64 {
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        span(&diff)
    }

    pub fn shifted(&self, r: f64) -> QTable {
        QTable { dims: self.dims, values: self.values.iter().map(|v| v + r).collect() }
    }

    pub fn scaled(&self, c: f64) -> QTable {
        QTable { dims: self.dims, values: self.values.iter().map(|v| v * c).collect() }
    }
}

pub(crate) fn span(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Per-state distribution over agent actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPolicy {
    actions: usize,
    probs: Vec<f64>,
}

impl MixedPolicy {
    pub fn uniform(states: usize, actions: usize) -> Self {
        MixedPolicy { actions, probs: vec![1.0 / actions as f64; states * actions] }
    }

    /// Builds a policy from per-state rows. Each row must be a distribution
    /// within [`PROB_TOL`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let actions = rows.first().map_or(0, |r| r.len());
        if actions == 0 {
            return Err(Error::ShapeMismatch("policy needs at least one state and action".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != actions {
                return Err(Error::ShapeMismatch(format!("policy row {s} has {} entries", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidParameter {
                    name: "policy",
                    reason: format!("row {s} is not a distribution (sum {sum})"),
                });
            }
            probs.extend_from_slice(row);
        }
        Ok(MixedPolicy { actions, probs })
    }

    pub fn states(&self) -> usize {
        self.probs.len() / self.actions
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.actions).map(|c| c.to_vec()).collect()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.actions + a]
    }
}

/// Visit counts `N(s, a, o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitCounts {
    dims: Dims,
    counts: Vec<u64>,
}

impl VisitCounts {
    pub fn zeros(dims: Dims) -> Self {
        VisitCounts { dims, counts: vec![0; dims.len()] }
    }

    pub fn get(&self, s: usize, a: usize, o: usize) -> u64 {
        self.counts[self.dims.index(s, a, o)]
    }

    /// Increments `N(s, a, o)` and returns the new count.
    pub fn increment(&mut self, s: usize, a: usize, o: usize) -> u64 {
        let i = self.dims.index(s, a, o);
        self.counts[i] += 1;
        self.counts[i]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// `Σ_a π[s][a] · Q[s][a][o]` for every opponent action `o`.
pub fn expected_q(q: &QTable, s: usize, policy_row: &[f64]) -> Result<Vec<f64>> {
    let d = q.dims();
    if s >= d.states {
        return Err(Error::ShapeMismatch(format!("state {s} out of range 0..{}", d.states)));
    }
    if policy_row.len() != d.actions {
        return Err(Error::ShapeMismatch(format!(
            "policy row has {} actions, Q has {}",
            policy_row.len(),
            d.actions
        )));
    }
    Ok(expected_q_unchecked(q, s, policy_row))
}

pub(crate) fn expected_q_unchecked(q: &QTable, s: usize, policy_row: &[f64]) -> Vec<f64> {
    let d = q.dims();
    let block = q.state_slice(s);
    let mut out = vec![0.0; d.opponents];
    for (a, &p) in policy_row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row = &block[a * d.opponents..(a + 1) * d.opponents];
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += p * v;
        }
    }
    out
}

/// Discount field of the model document: a number, or the string `"average"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaField {
    Discount(f64),
    Label(String),
}

/// Text serialization of a [`TabularModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_opponent: usize,
    pub gamma: GammaField,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub initial_state: usize,
    pub bound_c: f64,
}

impl ModelDocument {
    pub fn from_model(model: &TabularModel) -> Self {
        let d = model.dims();
        ModelDocument {
            n_states: d.states,
            n_actions: d.actions,
            n_opponent: d.opponents,
            gamma: match model.criterion() {
                Criterion::Discounted(g) => GammaField::Discount(g),
                Criterion::Average => GammaField::Label("average".into()),
            },
            p: model.transitions_flat().to_vec(),
            r: model.rewards_flat().to_vec(),
            initial_state: model.initial_state(),
            bound_c: model.reward_bound(),
        }
    }

    /// Converts to a model, renormalizing rows within tolerance and
    /// rejecting anything that still fails validation.
    pub fn into_model(self) -> Result<TabularModel> {
        let criterion = match &self.gamma {
            GammaField::Discount(g) => Criterion::Discounted(*g),
            GammaField::Label(s) if s == "average" => Criterion::Average,
            GammaField::Label(s) => {
                return Err(Error::InvalidParameter {
                    name: "gamma",
                    reason: format!("expected a discount in (0, 1) or \"average\", got {s:?}"),
                })
            }
        };
        let mut model = TabularModel::new(
            Dims::new(self.n_states, self.n_actions, self.n_opponent),
            self.p,
            self.r,
            criterion,
            self.initial_state,
            self.bound_c,
        )?;
        model.normalize_rows();
        validate_model(&model).into_result()?;
        Ok(model)
    }
}

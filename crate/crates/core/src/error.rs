use thiserror::Error;

use crate::model::ValidationReport;

/// Errors raised by the solvers, learners and model constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite entry in payoff matrix at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("criterion mismatch: expected {expected} criterion")]
    CriterionMismatch { expected: &'static str },

    #[error("iteration budget of {budget} sweeps exceeded (last increment {last_increment:.3e})")]
    IterationBudgetExceeded { budget: usize, last_increment: f64 },

    #[error("learner diverged at step {step}: |Q| reached {magnitude:.3e}")]
    Diverged { step: u64, magnitude: f64 },

    #[error("problem has no objective reward to shift")]
    MissingObjective,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid bisection bracket: {0}")]
    BracketInvalid(String),

    #[error("linear program unbounded")]
    Unbounded,
}

pub type Result<T> = std::result::Result<T, Error>;

//! Tabular constrained MDPs solved as zero-sum Markov-Bandit games.
//!
//! A constrained problem with reward functions `r^1..r^J` becomes a game in
//! which an opponent commits to one constraint index `j` for all time and the
//! agent maximizes the worst case. The game is learned with maximin
//! Q-learning ([`learner`]) or solved exactly ([`oracle`]).

pub mod environments;
pub mod error;
pub mod evaluation;
pub mod learner;
pub mod matrix_game;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
pub use model::{Criterion, Dims, MixedPolicy, QTable, TabularModel, VisitCounts};

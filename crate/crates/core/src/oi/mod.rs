//! Multi-sample, sample-access outcome indistinguishability.
//!
//! A [`Distinguisher`] receives `k` tuples `(x_i, y_i, p_i)` and accepts when
//! the transform-derived predictor does not lose to its hypothesis on the
//! sub-sample inside its group. A predictor `p` is OI against a family when
//! no member's acceptance probability differs by more than `tau` between
//! tuples from the real distribution and tuples whose labels are drawn from
//! `Ber(p(x))`.

mod audit;
mod distinguisher;
mod learner;

pub use audit::{acceptance_gap, audit_oi, audit_trials, AcceptanceGap, OiReport, OiReportRow};
pub use distinguisher::{acceptance_probability, distinguisher_accepts, sample_tuples, Distinguisher};
pub use learner::{learn_oi, learner_budget, LearnerPath, OiLearnOutcome, OiLearnerConfig, TrainingSource};

use thiserror::Error;

use crate::losses::LossError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OiError {
    #[error("distinguisher expects {expected} tuples, got {got}")]
    WrongArity { expected: u64, got: usize },
    #[error("tuple {index} carries no prediction p_i")]
    MissingPrediction { index: usize },
    #[error("invalid OI parameter: {0}")]
    InvalidParameter(String),
    #[error("OI learner exhausted its budget after {samples_consumed} samples; failing distinguishers: {}", failing.join(", "))]
    BudgetExhausted {
        failing: Vec<String>,
        samples_consumed: u64,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

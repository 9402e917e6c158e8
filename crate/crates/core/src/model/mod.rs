//! Finite probability model: domains, labeled distributions, groups,
//! predictors and samples.
//!
//! Every distribution lives on an explicit, indexed domain. Points are opaque
//! tokens; their only structure is membership in groups and (for fairness
//! losses) the pairwise metric.

pub(crate) mod distribution;
mod domain;
mod predictor;
pub mod rng;
mod sample;

pub use distribution::{Distribution, WeightedPoint, MAINTAINED_MASS_TOLERANCE, INPUT_MASS_TOLERANCE};
pub use domain::{Domain, Group, GroupCollection, NamedGroup};
pub use predictor::{HypothesisCollection, NamedPredictor, Predictor};
pub use sample::{LabelCounts, Record, Sample};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain must contain at least one point")]
    EmptyDomain,
    #[error("duplicate point identifier `{0}`")]
    DuplicatePoint(String),
    #[error("invalid point identifier `{0}`: must be a non-empty token without whitespace")]
    InvalidPointName(String),
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative or non-finite mass {value} at point {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("masses sum to {sum}, which is not within 1e-6 of 1")]
    MassSumOutOfTolerance { sum: f64 },
    #[error("{what} value {value} at point {index} is outside [0, 1]")]
    OutOfUnitInterval {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("group has zero mass under the distribution")]
    EmptyGroupMass,
    #[error("point index {index} is outside a domain of size {size}")]
    PointOutOfRange { index: usize, size: usize },
    #[error("duplicate name `{0}` in collection")]
    DuplicateName(String),
    #[error("hypothesis collection must be non-empty")]
    EmptyHypothesisCollection,
}

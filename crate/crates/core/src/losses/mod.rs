//! Loss functions over finite distributions.
//!
//! A loss maps a (distribution, predictor) pair to `[0, 1]` and only looks at
//! the predictor on the distribution's support. Four families are provided:
//!
//! | kind                   | unambiguous | uniform convergence |
//! |------------------------|-------------|---------------------|
//! | decomposable           | yes         | yes                 |
//! | calibration (binned)   | yes         | yes                 |
//! | a·IF + b·decomposable  | yes         | yes (pairwise)      |
//! | a·FPR + b·FNR          | no          | no                  |
//!
//! Losses are evaluated exactly; the empirical loss of a sample is the loss
//! of its empirical distribution.

mod metric;
mod properness;

pub use metric::Metric;
pub use properness::{check_unambiguity, derive_f, grid_values, is_unambiguous, FProperTransform, Unambiguity};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{Distribution, ModelError, Predictor, Sample, WeightedPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("{0} is conditioned on a zero-probability event")]
    UndefinedConditional(&'static str),
    #[error("loss requires a binary predictor, got {value} at point {point}")]
    NonBinaryPredictor { point: usize, value: f64 },
    #[error("empirical loss of an empty sample is undefined")]
    EmptySample,
    #[error("loss has no unique minimizer on the singleton at point {point} with E[y|x] = {z}")]
    Ambiguous { point: usize, z: f64 },
    #[error("{kind} loss does not have the uniform convergence property")]
    NoUniformConvergence { kind: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-example loss `l(y, v)` of a decomposable loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLoss {
    /// Expected 0-1 loss `|y - v|`; equals `1[v != y]` on binary predictions.
    ZeroOne,
    /// `(v - y)^2`.
    Squared,
}

impl PointLoss {
    #[inline]
    pub fn eval(self, label: bool, v: f64) -> f64 {
        let y = if label { 1.0 } else { 0.0 };
        match self {
            PointLoss::ZeroOne => (y - v).abs(),
            PointLoss::Squared => (v - y) * (v - y),
        }
    }

    /// `E_{y ~ Ber(z)} l(y, v)`.
    #[inline]
    pub fn expected(self, z: f64, v: f64) -> f64 {
        z * self.eval(true, v) + (1.0 - z) * self.eval(false, v)
    }

    pub fn name(self) -> &'static str {
        match self {
            PointLoss::ZeroOne => "zero_one",
            PointLoss::Squared => "squared",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "zero_one" => Some(PointLoss::ZeroOne),
            "squared" => Some(PointLoss::Squared),
            _ => None,
        }
    }
}

/// How an error rate conditioned on an empty event is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyConditional {
    /// The rate is taken to be 0.
    #[default]
    Zero,
    /// Evaluation fails with [`LossError::UndefinedConditional`].
    Strict,
}

pub const DEFAULT_CALIBRATION_WIDTH: f64 = 0.1;
pub const DEFAULT_CALIBRATION_UC_CONSTANT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub enum LossFunction {
    Decomposable(PointLoss),
    /// Expected calibration error over `lambda`-wide prediction buckets.
    Calibration { lambda: f64, uc_constant: f64 },
    /// `a * IF + b * decomposable`, IF measured against `metric`.
    IfPlusDecomposable {
        a: f64,
        b: f64,
        point: PointLoss,
        metric: Arc<Metric>,
    },
    /// `a * FPR + b * FNR` for binary classifiers.
    ErrorRates {
        a: f64,
        b: f64,
        empty: EmptyConditional,
    },
}

fn check_weights(a: f64, b: f64) -> Result<(), LossError> {
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12 && a + b > 0.0) {
        return Err(LossError::InvalidParameter(format!(
            "weights a={a}, b={b} must be non-negative with 0 < a + b <= 1"
        )));
    }
    Ok(())
}

fn check_unit_open(name: &str, v: f64) -> Result<(), LossError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(LossError::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

impl LossFunction {
    pub fn squared() -> Self {
        LossFunction::Decomposable(PointLoss::Squared)
    }

    pub fn zero_one() -> Self {
        LossFunction::Decomposable(PointLoss::ZeroOne)
    }

    pub fn calibration(lambda: f64) -> Result<Self, LossError> {
        Self::calibration_with_constant(lambda, DEFAULT_CALIBRATION_UC_CONSTANT)
    }

    pub fn calibration_with_constant(lambda: f64, uc_constant: f64) -> Result<Self, LossError> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(LossError::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1]")));
        }
        if !(uc_constant > 0.0 && uc_constant.is_finite()) {
            return Err(LossError::InvalidParameter(format!(
                "calibration constant {uc_constant} must be positive"
            )));
        }
        Ok(LossFunction::Calibration { lambda, uc_constant })
    }

    pub fn if_plus_decomposable(a: f64, b: f64, point: PointLoss, metric: Arc<Metric>) -> Result<Self, LossError> {
        check_weights(a, b)?;
        Ok(LossFunction::IfPlusDecomposable { a, b, point, metric })
    }

    pub fn error_rates(a: f64, b: f64) -> Result<Self, LossError> {
        check_weights(a, b)?;
        Ok(LossFunction::ErrorRates {
            a,
            b,
            empty: EmptyConditional::Zero,
        })
    }

    /// False positive rate alone.
    pub fn fpr() -> Self {
        LossFunction::ErrorRates {
            a: 1.0,
            b: 0.0,
            empty: EmptyConditional::Zero,
        }
    }

    pub fn with_empty_conditional(self, policy: EmptyConditional) -> Self {
        match self {
            LossFunction::ErrorRates { a, b, .. } => LossFunction::ErrorRates { a, b, empty: policy },
            other => other,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            LossFunction::Decomposable(_) => "decomposable",
            LossFunction::Calibration { .. } => "calibration",
            LossFunction::IfPlusDecomposable { .. } => "if_plus_decomposable",
            LossFunction::ErrorRates { .. } => "error_rates",
        }
    }

    /// Losses defined only on `{0, 1}`-valued predictors.
    pub fn binary_only(&self) -> bool {
        matches!(
            self,
            LossFunction::IfPlusDecomposable { .. } | LossFunction::ErrorRates { .. }
        )
    }

    pub fn metric(&self) -> Option<&Arc<Metric>> {
        match self {
            LossFunction::IfPlusDecomposable { metric, .. } => Some(metric),
            _ => None,
        }
    }

    /// `L_D(h)`.
    pub fn loss(&self, d: &Distribution, h: &Predictor) -> Result<f64, LossError> {
        check_len(d.len(), h)?;
        self.evaluate_points(&d.support(), |i| h.get(i))
    }

    /// `L_S(h)`: the loss on the empirical distribution of `s`.
    pub fn empirical_loss(&self, s: &Sample, h: &Predictor) -> Result<f64, LossError> {
        if s.is_empty() {
            return Err(LossError::EmptySample);
        }
        let points = s.tally(h.len()).weighted_points(None);
        self.evaluate_points(&points, |i| h.get(i))
    }

    /// Evaluate on an explicit weighted support. Masses are renormalized;
    /// an empty support has loss 0.
    pub fn evaluate_points<F>(&self, points: &[WeightedPoint], h: F) -> Result<f64, LossError>
    where
        F: Fn(usize) -> f64,
    {
        let total: f64 = points.iter().map(|p| p.mass).sum();
        if points.is_empty() || total <= 0.0 {
            return Ok(0.0);
        }
        let value = match self {
            LossFunction::Decomposable(point) => decomposable(*point, points, &h) / total,
            LossFunction::Calibration { lambda, .. } => calibration_error(*lambda, points, &h) / total,
            LossFunction::IfPlusDecomposable { a, b, point, metric } => {
                require_binary(points, &h)?;
                let fairness = individual_fairness(metric, points, &h)? / (total * total);
                a * fairness + b * decomposable(*point, points, &h) / total
            }
            LossFunction::ErrorRates { a, b, empty } => {
                require_binary(points, &h)?;
                error_rates(*a, *b, *empty, points, &h)?
            }
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// Sample size giving uniform convergence at `(epsilon, delta)` for any
    /// class of `k` hypotheses.
    pub fn uc_sample_bound(&self, epsilon: f64, delta: f64, k: usize) -> Result<u64, LossError> {
        check_unit_open("epsilon", epsilon)?;
        check_unit_open("delta", delta)?;
        if k == 0 {
            return Err(LossError::InvalidParameter("class size must be at least 1".into()));
        }
        let k = k as f64;
        let hoeffding = ((2.0 * k / delta).ln() / (2.0 * epsilon * epsilon)).ceil();
        let bound = match self {
            LossFunction::Decomposable(_) => hoeffding,
            LossFunction::Calibration { uc_constant, .. } => (uc_constant * hoeffding).ceil(),
            LossFunction::IfPlusDecomposable { .. } => ((4.0 * k / delta).ln() / (epsilon * epsilon)).ceil(),
            LossFunction::ErrorRates { .. } => {
                return Err(LossError::NoUniformConvergence { kind: "error_rates" })
            }
        };
        Ok(bound as u64)
    }
}

impl fmt::Display for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossFunction::Decomposable(p) => write!(f, "decomposable({})", p.name()),
            LossFunction::Calibration { lambda, .. } => write!(f, "calibration(lambda={lambda})"),
            LossFunction::IfPlusDecomposable { a, b, point, .. } => {
                write!(f, "{a}*IF + {b}*{}", point.name())
            }
            LossFunction::ErrorRates { a, b, .. } => write!(f, "{a}*FPR + {b}*FNR"),
        }
    }
}

/// `L_D(h)`.
pub fn loss(l: &LossFunction, d: &Distribution, h: &Predictor) -> Result<f64, LossError> {
    l.loss(d, h)
}

/// `L_S(h)`.
pub fn empirical_loss(l: &LossFunction, s: &Sample, h: &Predictor) -> Result<f64, LossError> {
    l.empirical_loss(s, h)
}

pub fn uc_sample_bound(l: &LossFunction, epsilon: f64, delta: f64, k: usize) -> Result<u64, LossError> {
    l.uc_sample_bound(epsilon, delta, k)
}

fn check_len(n: usize, h: &Predictor) -> Result<(), LossError> {
    if h.len() != n {
        return Err(ModelError::LengthMismatch {
            what: "predictor",
            expected: n,
            got: h.len(),
        }
        .into());
    }
    Ok(())
}

fn decomposable<F: Fn(usize) -> f64>(point: PointLoss, points: &[WeightedPoint], h: &F) -> f64 {
    points
        .iter()
        .map(|p| p.mass * point.expected(p.label_prob, h(p.index)))
        .sum()
}

/// Bucket index of a prediction for width `lambda`.
pub(crate) fn bucket_of(v: f64, lambda: f64) -> usize {
    let buckets = bucket_count(lambda);
    ((v * (1.0 / lambda)).floor() as usize).min(buckets - 1)
}

pub(crate) fn bucket_count(lambda: f64) -> usize {
    ((1.0 / lambda) - 1e-9).ceil().max(1.0) as usize
}

// sum_b Pr[b] |E[y|b] - E[h|b]| = sum_b |sum_{x in b} m(x) (z(x) - h(x))|
fn calibration_error<F: Fn(usize) -> f64>(lambda: f64, points: &[WeightedPoint], h: &F) -> f64 {
    let mut gaps = vec![0.0; bucket_count(lambda)];
    for p in points {
        let v = h(p.index);
        gaps[bucket_of(v, lambda)] += p.mass * (p.label_prob - v);
    }
    gaps.iter().map(|g| g.abs()).sum()
}

fn require_binary<F: Fn(usize) -> f64>(points: &[WeightedPoint], h: &F) -> Result<(), LossError> {
    for p in points {
        let v = h(p.index);
        if v != 0.0 && v != 1.0 {
            return Err(LossError::NonBinaryPredictor { point: p.index, value: v });
        }
    }
    Ok(())
}

fn individual_fairness<F: Fn(usize) -> f64>(
    metric: &Metric,
    points: &[WeightedPoint],
    h: &F,
) -> Result<f64, LossError> {
    let mut total = 0.0;
    for p in points {
        if p.index >= metric.len() {
            return Err(LossError::InvalidMetric(format!(
                "point {} outside a metric over {} points",
                p.index,
                metric.len()
            )));
        }
        let hp = h(p.index);
        for q in points {
            if metric.distance(p.index, q.index) == 0.0 && hp != h(q.index) {
                total += p.mass * q.mass;
            }
        }
    }
    Ok(total)
}

fn error_rates<F: Fn(usize) -> f64>(
    a: f64,
    b: f64,
    empty: EmptyConditional,
    points: &[WeightedPoint],
    h: &F,
) -> Result<f64, LossError> {
    let (mut neg, mut pos, mut false_pos, mut false_neg) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let v = h(p.index);
        neg += p.mass * (1.0 - p.label_prob);
        pos += p.mass * p.label_prob;
        false_pos += p.mass * (1.0 - p.label_prob) * v;
        false_neg += p.mass * p.label_prob * (1.0 - v);
    }
    let rate = |num: f64, den: f64, weight: f64, what: &'static str| -> Result<f64, LossError> {
        if den > 0.0 {
            Ok(num / den)
        } else if empty == EmptyConditional::Strict && weight > 0.0 {
            Err(LossError::UndefinedConditional(what))
        } else {
            Ok(0.0)
        }
    };
    Ok(a * rate(false_pos, neg, a, "false positive rate")? + b * rate(false_neg, pos, b, "false negative rate")?)
}

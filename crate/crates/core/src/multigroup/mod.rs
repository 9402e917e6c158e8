//! End-to-end multi-group learning through OI.
//!
//! The driver fixes the parameter schedule, builds one distinguisher per
//! (group, hypothesis) pair, asks the OI learner for `p` and returns
//! `h = f(p)`. When the true distribution is known the result is checked
//! against the exact per-group baselines on every group of mass at least
//! `gamma`.

mod uc;

pub use uc::{uc_estimate, UcQuantiles, UcSummary};

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::losses::{FProperTransform, LossError, LossFunction};
use crate::model::{GroupCollection, HypothesisCollection, ModelError, NamedGroup, Predictor};
use crate::oi::{learn_oi, Distinguisher, OiError, OiLearnOutcome, OiLearnerConfig, TrainingSource};
use crate::oracle::{verify_multipac, OracleError, SlackReport};

#[derive(Debug, Error, Clone)]
pub enum MultiGroupError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("OI learner ran out of budget after {samples_consumed} samples; incompatibility witness: {}", witness.join(", "))]
    BudgetExhausted {
        witness: Vec<String>,
        samples_consumed: u64,
    },
    #[error("learned predictor exceeds the allowed slack on groups: {}", witness.join(", "))]
    SlackViolation {
        witness: Vec<String>,
        result: Box<MultiGroupResult>,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Oi(OiError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<OiError> for MultiGroupError {
    fn from(e: OiError) -> Self {
        match e {
            OiError::BudgetExhausted {
                failing,
                samples_consumed,
            } => MultiGroupError::BudgetExhausted {
                witness: failing,
                samples_consumed,
            },
            OiError::Loss(l) => MultiGroupError::Loss(l),
            other => MultiGroupError::Oi(other),
        }
    }
}

/// Accuracy, confidence and minimum group mass for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiGroupParams {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Per-group accuracy `epsilon / 4`.
    pub eps_prime: f64,
    /// Distinguisher slack, equal to `eps_prime`.
    pub alpha: f64,
    /// Per-group confidence `delta / 4`.
    pub delta_prime: f64,
    /// OI learner failure probability.
    pub eta: f64,
    /// OI accuracy.
    pub tau: f64,
    /// Per-group sample size: uniform convergence for `|H| + 1` predictors.
    pub k_group: u64,
    /// Tuples per distinguisher.
    pub k: u64,
}

fn check_open(name: &str, v: f64) -> Result<(), MultiGroupError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(MultiGroupError::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

/// `eps' = alpha = epsilon / 4`, `delta' = eta = tau = delta / 4`,
/// `k_G = m_UC(eps', delta', |H| + 1)` and
/// `k = ceil(10 / gamma * ln(1 / delta') * k_G)`.
pub fn schedule_params(
    loss: &LossFunction,
    params: MultiGroupParams,
    num_hypotheses: usize,
) -> Result<Schedule, MultiGroupError> {
    check_open("epsilon", params.epsilon)?;
    check_open("delta", params.delta)?;
    check_open("gamma", params.gamma)?;
    let eps_prime = params.epsilon / 4.0;
    let delta_prime = params.delta / 4.0;
    let k_group = loss.uc_sample_bound(eps_prime, delta_prime, num_hypotheses + 1)?;
    Ok(Schedule {
        epsilon: params.epsilon,
        delta: params.delta,
        gamma: params.gamma,
        eps_prime,
        alpha: eps_prime,
        delta_prime,
        eta: delta_prime,
        tau: delta_prime,
        k_group,
        k: tuples_per_distinguisher(params.gamma, delta_prime, k_group),
    })
}

pub(crate) fn tuples_per_distinguisher(gamma: f64, delta_prime: f64, k_group: u64) -> u64 {
    (10.0 / gamma * (1.0 / delta_prime).ln() * k_group as f64).ceil() as u64
}

/// One distinguisher per `(g, h)`, groups outermost.
pub fn build_family(
    loss: &Arc<LossFunction>,
    transform: &Arc<FProperTransform>,
    hypotheses: &HypothesisCollection,
    groups: &GroupCollection,
    alpha: f64,
    k: u64,
) -> Result<Vec<Distinguisher>, MultiGroupError> {
    let mut family = Vec::with_capacity(groups.len() * hypotheses.len());
    for g in groups.iter() {
        for h in hypotheses.iter() {
            family.push(
                Distinguisher::new(
                    g.name.clone(),
                    g.group.clone(),
                    h.name.clone(),
                    h.predictor.clone(),
                    alpha,
                    k,
                    Arc::clone(loss),
                    Arc::clone(transform),
                )
                .map_err(MultiGroupError::Oi)?,
            );
        }
    }
    Ok(family)
}

#[derive(Debug, Clone)]
pub struct MultiGroupResult {
    /// `h(x) = f(x, p(x))`.
    pub predictor: Predictor,
    /// The OI predictor `p`.
    pub underlying: Predictor,
    pub schedule: Schedule,
    pub family_size: usize,
    pub samples_consumed: u64,
    pub oi: OiLearnOutcome,
    /// Exact slack on groups of mass at least `gamma`, when the source is a
    /// known distribution.
    pub slack: Option<SlackReport>,
}

/// Learn one predictor that competes with `hypotheses` on every group.
///
/// With a planted source, a predictor that exceeds `epsilon` on some group of
/// mass at least `gamma` is returned inside [`MultiGroupError::SlackViolation`];
/// if the OI learner cannot satisfy the family the failing distinguishers
/// come back as [`MultiGroupError::BudgetExhausted`].
#[allow(clippy::too_many_arguments)]
pub fn multigroup_learn(
    loss: &Arc<LossFunction>,
    transform: &Arc<FProperTransform>,
    params: MultiGroupParams,
    hypotheses: &HypothesisCollection,
    groups: &GroupCollection,
    source: TrainingSource<'_>,
    seed: u64,
    config: &OiLearnerConfig,
) -> Result<MultiGroupResult, MultiGroupError> {
    let schedule = schedule_params(loss, params, hypotheses.len())?;
    let n = match source {
        TrainingSource::Planted(d) => d.len(),
        TrainingSource::Records { domain, .. } => domain.len(),
    };
    if hypotheses.get(0).predictor.len() != n {
        return Err(ModelError::LengthMismatch {
            what: "hypothesis",
            expected: n,
            got: hypotheses.get(0).predictor.len(),
        }
        .into());
    }
    let family = build_family(loss, transform, hypotheses, groups, schedule.alpha, schedule.k)?;
    let oi = learn_oi(source, &family, schedule.tau, schedule.eta, seed, config)?;
    let predictor = oi.predictor.map_points(|x, z| transform.apply(x, z))?;

    let slack = match source {
        TrainingSource::Planted(d) => {
            let heavy: Vec<NamedGroup> = groups
                .iter()
                .filter(|g| d.mass(&g.group) >= schedule.gamma)
                .cloned()
                .collect();
            let heavy = GroupCollection::new(heavy)?;
            Some(verify_multipac(loss, d, hypotheses, &heavy, schedule.epsilon, &predictor)?)
        }
        TrainingSource::Records { .. } => None,
    };
    let result = MultiGroupResult {
        underlying: oi.predictor.clone(),
        predictor,
        schedule,
        family_size: family.len(),
        samples_consumed: oi.samples_consumed,
        oi,
        slack,
    };
    if let Some(report) = result.slack.as_ref().filter(|r| !r.pass) {
        return Err(MultiGroupError::SlackViolation {
            witness: report.violations().map(|r| r.group.clone()).collect(),
            result: Box::new(result),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{Metric, PointLoss};
    use crate::model::{Distribution, Domain, Group, NamedPredictor};

    fn params(epsilon: f64, delta: f64, gamma: f64) -> MultiGroupParams {
        MultiGroupParams { epsilon, delta, gamma }
    }

    #[test]
    fn schedule_split() {
        let s = schedule_params(&LossFunction::squared(), params(0.4, 0.4, 0.5), 1).unwrap();
        assert!((s.eps_prime - 0.1).abs() < 1e-15 && s.alpha == s.eps_prime);
        assert!((s.delta_prime - 0.1).abs() < 1e-15);
        assert_eq!((s.eta, s.tau), (s.delta_prime, s.delta_prime));
        // ceil(ln(2 * 2 / 0.1) / (2 * 0.01))
        assert_eq!(s.k_group, 185);
        assert_eq!(s, schedule_params(&LossFunction::squared(), params(0.4, 0.4, 0.5), 1).unwrap());
    }

    #[test]
    fn tuple_count_formula() {
        assert_eq!(tuples_per_distinguisher(0.5, 0.1, 100), 4606);
    }

    #[test]
    fn schedule_rejects_losses_without_uniform_convergence() {
        let err = schedule_params(&LossFunction::fpr(), params(0.4, 0.4, 0.5), 1).unwrap_err();
        assert!(matches!(err, MultiGroupError::Loss(LossError::NoUniformConvergence { .. })));
        assert!(schedule_params(&LossFunction::squared(), params(0.0, 0.4, 0.5), 1).is_err());
    }

    fn incompatible() -> (Arc<LossFunction>, Distribution, HypothesisCollection, GroupCollection) {
        let domain = Arc::new(Domain::new(vec!["x_S".into(), "x_T".into(), "x_ST".into()]).unwrap());
        let d = Distribution::new(domain, vec![0.8, 0.1, 0.1], vec![0.0, 1.0, 1.0]).unwrap();
        let metric = Arc::new(Metric::from_identical_pairs(3, &[(0, 2)]).unwrap());
        let loss = Arc::new(LossFunction::if_plus_decomposable(0.9, 0.1, PointLoss::ZeroOne, metric).unwrap());
        let h = HypothesisCollection::new(
            [("h0", 0.0), ("h1", 1.0)]
                .iter()
                .map(|&(name, c)| NamedPredictor {
                    name: name.into(),
                    predictor: Predictor::constant(3, c).unwrap(),
                })
                .collect(),
        )
        .unwrap();
        let g = GroupCollection::new(vec![
            NamedGroup {
                name: "S".into(),
                group: Group::new(vec![0, 2], 3).unwrap(),
            },
            NamedGroup {
                name: "T".into(),
                group: Group::new(vec![1, 2], 3).unwrap(),
            },
        ])
        .unwrap();
        (loss, d, h, g)
    }

    #[test]
    fn family_is_group_major_product() {
        let (loss, _, h, g) = incompatible();
        let f = Arc::new(FProperTransform::Threshold);
        let family = build_family(&loss, &f, &h, &g, 0.1, 10).unwrap();
        let names: Vec<_> = family.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["A[S,h0]", "A[S,h1]", "A[T,h0]", "A[T,h1]"]);
        let empty = GroupCollection::new(vec![]).unwrap();
        assert!(build_family(&loss, &f, &h, &empty, 0.1, 10).unwrap().is_empty());
    }

    #[test]
    fn bayes_class_on_single_group() {
        let domain = Arc::new(Domain::indexed(4).unwrap());
        let z = vec![0.1, 0.4, 0.7, 0.9];
        let d = Distribution::new(domain, vec![0.25; 4], z.clone()).unwrap();
        let h = HypothesisCollection::new(vec![NamedPredictor {
            name: "bayes".into(),
            predictor: Predictor::new(z).unwrap(),
        }])
        .unwrap();
        let g = GroupCollection::new(vec![NamedGroup {
            name: "all".into(),
            group: Group::full(4),
        }])
        .unwrap();
        let loss = Arc::new(LossFunction::squared());
        let f = Arc::new(FProperTransform::Identity);
        let r = multigroup_learn(
            &loss,
            &f,
            params(0.4, 0.4, 0.5),
            &h,
            &g,
            TrainingSource::Planted(&d),
            3,
            &OiLearnerConfig::default(),
        )
        .unwrap();
        let report = r.slack.as_ref().unwrap();
        assert!(report.pass && report.max_slack <= 0.4);
        assert_eq!(r.predictor, r.underlying);
        assert!(r.samples_consumed as f64 <= r.oi.budget);
    }

    #[test]
    fn incompatible_instance_yields_witness() {
        let (loss, d, h, g) = incompatible();
        let f = Arc::new(FProperTransform::derived(Arc::clone(&loss), 0.1).unwrap());
        let err = multigroup_learn(
            &loss,
            &f,
            params(0.05, 0.4, 0.1),
            &h,
            &g,
            TrainingSource::Planted(&d),
            11,
            &OiLearnerConfig::default(),
        )
        .unwrap_err();
        match err {
            MultiGroupError::SlackViolation { witness, result } => {
                assert!(!witness.is_empty());
                for x in 0..3 {
                    assert_eq!(
                        result.predictor.get(x),
                        f.apply(x, result.underlying.get(x)).unwrap()
                    );
                }
            }
            MultiGroupError::BudgetExhausted { witness, .. } => assert!(!witness.is_empty()),
            other => panic!("unexpected {other}"),
        }
    }
}

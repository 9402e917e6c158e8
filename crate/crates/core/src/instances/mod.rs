//! Problem instances: the fixed counterexample constructions, the
//! singleton-group properness witness, seeded random instances and the
//! instance text format.

mod format;

pub use format::{from_text, load_instance, save_instance, to_text, ParseError, FORMAT_HEADER};

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution as _, Exp1};
use thiserror::Error;

use crate::losses::{derive_f, LossError, LossFunction, Metric, PointLoss};
use crate::model::{
    rng, Distribution, Domain, Group, GroupCollection, HypothesisCollection, ModelError, NamedGroup,
    NamedPredictor, Predictor,
};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("loss weights a={a}, b={b} must satisfy a, b > 0 and a + b <= 1")]
    BadWeights { a: f64, b: f64 },
    #[error("invalid instance parameter: {0}")]
    InvalidParameter(String),
    #[error("no group with mass >= {gamma} found after {attempts} draws")]
    RejectionBudgetExceeded { gamma: f64, attempts: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Distribution, benchmark class, groups and loss over one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub distribution: Distribution,
    pub hypotheses: HypothesisCollection,
    pub groups: GroupCollection,
    pub loss: Arc<LossFunction>,
    /// Present exactly when the loss is metric-based.
    pub metric: Option<Arc<Metric>>,
    /// Single-line free text describing where the instance came from.
    pub note: String,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Instance {
    pub fn new(
        distribution: Distribution,
        hypotheses: HypothesisCollection,
        groups: GroupCollection,
        loss: Arc<LossFunction>,
        note: impl Into<String>,
    ) -> Result<Self, InstanceError> {
        let n = distribution.len();
        for h in hypotheses.iter() {
            if !is_token(&h.name) {
                return Err(InstanceError::InvalidParameter(format!("hypothesis name `{}`", h.name)));
            }
            if h.predictor.len() != n {
                return Err(ModelError::LengthMismatch {
                    what: "hypothesis",
                    expected: n,
                    got: h.predictor.len(),
                }
                .into());
            }
        }
        for g in groups.iter() {
            if !is_token(&g.name) {
                return Err(InstanceError::InvalidParameter(format!("group name `{}`", g.name)));
            }
            if let Some(&last) = g.group.members().last() {
                if last >= n {
                    return Err(ModelError::PointOutOfRange { index: last, size: n }.into());
                }
            }
        }
        let metric = loss.metric().cloned();
        if let Some(m) = &metric {
            if m.len() != n {
                return Err(ModelError::LengthMismatch {
                    what: "metric",
                    expected: n,
                    got: m.len(),
                }
                .into());
            }
        }
        let note = note.into().replace(['\n', '\r'], " ");
        Ok(Self {
            distribution,
            hypotheses,
            groups,
            loss,
            metric,
            note,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.distribution.domain()
    }

    pub fn len(&self) -> usize {
        self.distribution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distribution.is_empty()
    }
}

fn named_group(name: &str, members: Vec<usize>, n: usize) -> Result<NamedGroup, ModelError> {
    Ok(NamedGroup {
        name: name.into(),
        group: Group::new(members, n)?,
    })
}

fn named_constant(name: &str, n: usize, value: f64) -> Result<NamedPredictor, ModelError> {
    Ok(NamedPredictor {
        name: name.into(),
        predictor: Predictor::constant(n, value)?,
    })
}

/// Three points where accuracy and individual fairness pull the shared point
/// in opposite directions.
///
/// Points `x_S, x_T, x_ST` with masses `0.8, 0.1, 0.1` and labels `0, 1, 1`;
/// constant classifiers `h0, h1`; groups `S = {x_S, x_ST}` and
/// `T = {x_T, x_ST}`; `x_S` and `x_ST` are the only identical pair; loss
/// `a * IF + b * zero_one`.
pub fn appendix_b_instance(a: f64, b: f64) -> Result<Instance, InstanceError> {
    if !(a > 0.0 && b > 0.0 && a + b <= 1.0 + 1e-12) {
        return Err(InstanceError::BadWeights { a, b });
    }
    let domain = Arc::new(Domain::new(vec!["x_S".into(), "x_T".into(), "x_ST".into()])?);
    let d = Distribution::new(domain, vec![0.8, 0.1, 0.1], vec![0.0, 1.0, 1.0])?;
    let metric = Arc::new(Metric::from_identical_pairs(3, &[(0, 2)])?);
    let loss = Arc::new(LossFunction::if_plus_decomposable(a, b, PointLoss::ZeroOne, metric)?);
    let hypotheses = HypothesisCollection::new(vec![named_constant("h0", 3, 0.0)?, named_constant("h1", 3, 1.0)?])?;
    let groups = GroupCollection::new(vec![named_group("S", vec![0, 2], 3)?, named_group("T", vec![1, 2], 3)?])?;
    Instance::new(d, hypotheses, groups, loss, format!("individual fairness vs accuracy, a={a} b={b}"))
}

/// Uniform distribution on `n` points with a single negative example `x0`;
/// `H = {h = 1}`; loss is the false positive rate.
///
/// A sample that misses `x0` has no negatives, so its empirical false
/// positive rate is 0 while the true rate of `h` is 1.
pub fn appendix_a_instance(n: usize) -> Result<Instance, InstanceError> {
    if n < 2 {
        return Err(InstanceError::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    let domain = Arc::new(Domain::indexed(n)?);
    let mut z = vec![1.0; n];
    z[0] = 0.0;
    let d = Distribution::new(domain, vec![1.0 / n as f64; n], z)?;
    let hypotheses = HypothesisCollection::new(vec![named_constant("one", n, 1.0)?])?;
    let groups = GroupCollection::new(vec![NamedGroup {
        name: "all".into(),
        group: Group::full(n),
    }])?;
    Instance::new(
        d,
        hypotheses,
        groups,
        Arc::new(LossFunction::fpr()),
        format!("false positive rate without uniform convergence, n={n}"),
    )
}

/// Singleton groups for every support point plus the whole support, with
/// one constant hypothesis per point at that point's singleton optimum
/// `f(x, z(x))` and the extra hypothesis `h_alt`.
///
/// Only a loss minimized pointwise by `f` can satisfy every singleton and
/// the global group at once.
pub fn properness_witness(
    loss: &Arc<LossFunction>,
    d: &Distribution,
    h_alt: &Predictor,
    resolution: f64,
) -> Result<Instance, InstanceError> {
    let n = d.len();
    let names = d.domain().names();
    let support = d.support_indices();
    let mut groups = Vec::with_capacity(support.len() + 1);
    let mut hypotheses = Vec::with_capacity(support.len() + 1);
    for &x in &support {
        let v = derive_f(loss, x, d.label_prob(x), resolution)?;
        groups.push(NamedGroup {
            name: format!("at_{}", names[x]),
            group: Group::singleton(x),
        });
        hypotheses.push(named_constant(&format!("opt_{}", names[x]), n, v)?);
    }
    groups.push(NamedGroup {
        name: "support".into(),
        group: Group::new(support.clone(), n)?,
    });
    hypotheses.push(NamedPredictor {
        name: "alt".into(),
        predictor: h_alt.clone(),
    });
    Instance::new(
        d.clone(),
        HypothesisCollection::new(hypotheses)?,
        GroupCollection::new(groups)?,
        Arc::clone(loss),
        format!("singleton-group properness witness, r={resolution}"),
    )
}

/// Loss families available to [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    ZeroOne,
    Calibration,
    /// `0.9 * IF + 0.1 * zero_one` with a random binary metric.
    IfZeroOne,
    /// `0.5 * FPR + 0.5 * FNR`.
    ErrorRates,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::ZeroOne => "zero_one",
            LossKind::Calibration => "calibration",
            LossKind::IfZeroOne => "if_zero_one",
            LossKind::ErrorRates => "error_rates",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            LossKind::Squared,
            LossKind::ZeroOne,
            LossKind::Calibration,
            LossKind::IfZeroOne,
            LossKind::ErrorRates,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    fn binary(self) -> bool {
        matches!(self, LossKind::IfZeroOne | LossKind::ErrorRates)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceConfig {
    pub n: usize,
    pub num_groups: usize,
    pub num_hypotheses: usize,
    pub min_group_mass: f64,
    pub loss: LossKind,
    /// Make the first group the whole domain.
    pub include_full_domain: bool,
    /// Append the Bayes conditional (thresholded for binary losses).
    pub include_bayes: bool,
    /// Grid step for random hypothesis values.
    pub hypothesis_resolution: f64,
    /// Bucket width when `loss` is calibration.
    pub calibration_width: f64,
}

impl Default for RandomInstanceConfig {
    fn default() -> Self {
        Self {
            n: 10,
            num_groups: 4,
            num_hypotheses: 8,
            min_group_mass: 0.25,
            loss: LossKind::Squared,
            include_full_domain: false,
            include_bayes: false,
            hypothesis_resolution: 0.1,
            calibration_width: crate::losses::DEFAULT_CALIBRATION_WIDTH,
        }
    }
}

/// Draws allowed per group before giving up on the mass constraint.
pub const GROUP_REJECTION_BUDGET: usize = 10_000;

/// Seeded random instance.
///
/// Masses are normalized `Exp(1)` draws (a flat Dirichlet), label
/// probabilities are uniform, groups are uniform random subsets redrawn
/// until their mass reaches `min_group_mass`, and hypotheses take uniform
/// values on the grid.
pub fn random_instance(seed: u64, config: &RandomInstanceConfig) -> Result<Instance, InstanceError> {
    let n = config.n;
    if n == 0 {
        return Err(InstanceError::InvalidParameter("n must be positive".into()));
    }
    if config.num_groups == 0 || config.num_hypotheses + usize::from(config.include_bayes) == 0 {
        return Err(InstanceError::InvalidParameter(
            "need at least one group and one hypothesis".into(),
        ));
    }
    if !(config.min_group_mass > 0.0 && config.min_group_mass < 1.0) {
        return Err(InstanceError::InvalidParameter(format!(
            "minimum group mass {} must lie in (0, 1)",
            config.min_group_mass
        )));
    }
    let mut r = rng::stream(seed, 0);
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut r)).collect::<Vec<f64>>();
    let total: f64 = raw.iter().sum();
    let mass: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let z: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let d = Distribution::new(Arc::new(Domain::indexed(n)?), mass, z)?;

    let mut groups = Vec::with_capacity(config.num_groups);
    for gi in 0..config.num_groups {
        if gi == 0 && config.include_full_domain {
            groups.push(named_group("all", (0..n).collect(), n)?);
            continue;
        }
        let mut found = None;
        for _ in 0..GROUP_REJECTION_BUDGET {
            let members: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
            if members.is_empty() {
                continue;
            }
            let group = Group::new(members, n)?;
            if d.mass(&group) >= config.min_group_mass {
                found = Some(group);
                break;
            }
        }
        let group = found.ok_or(InstanceError::RejectionBudgetExceeded {
            gamma: config.min_group_mass,
            attempts: GROUP_REJECTION_BUDGET,
        })?;
        groups.push(NamedGroup {
            name: format!("g{gi}"),
            group,
        });
    }

    let grid: Vec<f64> = if config.loss.binary() {
        vec![0.0, 1.0]
    } else {
        crate::losses::grid_values(config.hypothesis_resolution)?
    };
    let mut hypotheses = Vec::with_capacity(config.num_hypotheses + 1);
    for hi in 0..config.num_hypotheses {
        let values = (0..n).map(|_| grid[r.random_range(0..grid.len())]).collect();
        hypotheses.push(NamedPredictor {
            name: format!("h{hi}"),
            predictor: Predictor::new(values)?,
        });
    }
    if config.include_bayes {
        let values = if config.loss.binary() {
            d.label_probs().iter().map(|&p| if p >= 0.5 { 1.0 } else { 0.0 }).collect()
        } else {
            d.label_probs().to_vec()
        };
        hypotheses.push(NamedPredictor {
            name: "bayes".into(),
            predictor: Predictor::new(values)?,
        });
    }

    let loss = match config.loss {
        LossKind::Squared => LossFunction::squared(),
        LossKind::ZeroOne => LossFunction::zero_one(),
        LossKind::Calibration => LossFunction::calibration(config.calibration_width)?,
        LossKind::IfZeroOne => {
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if r.random_bool(0.2) {
                        pairs.push((i, j));
                    }
                }
            }
            let metric = Arc::new(Metric::from_identical_pairs(n, &pairs)?);
            LossFunction::if_plus_decomposable(0.9, 0.1, PointLoss::ZeroOne, metric)?
        }
        LossKind::ErrorRates => LossFunction::error_rates(0.5, 0.5)?,
    };
    Instance::new(
        d,
        HypothesisCollection::new(hypotheses)?,
        GroupCollection::new(groups)?,
        Arc::new(loss),
        format!("random seed={seed} loss={}", config.loss.name()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{best_in_class, feasible_multipac};

    #[test]
    fn incompatible_instance_anchors() {
        let inst = appendix_b_instance(0.9, 0.1).unwrap();
        assert_eq!(inst.distribution.masses(), &[0.8, 0.1, 0.1]);
        assert_eq!(inst.distribution.label_probs(), &[0.0, 1.0, 1.0]);
        let m = inst.metric.as_ref().unwrap();
        assert_eq!((m.distance(0, 2), m.distance(1, 2), m.distance(0, 1)), (0.0, 1.0, 1.0));
        for (a, b) in [(0.9, 0.1), (0.5, 0.5), (0.2, 0.3)] {
            let inst = appendix_b_instance(a, b).unwrap();
            let d = &inst.distribution;
            let s = best_in_class(&inst.loss, &d.restrict(&inst.groups.get(0).group).unwrap(), &inst.hypotheses).unwrap();
            let t = best_in_class(&inst.loss, &d.restrict(&inst.groups.get(1).group).unwrap(), &inst.hypotheses).unwrap();
            assert!((s.value - b / 9.0).abs() < 1e-12 && s.name == "h0");
            assert!(t.value.abs() < 1e-12 && t.name == "h1");
        }
    }

    #[test]
    fn incompatible_instance_threshold_on_binary_grid() {
        // Exact threshold: min(7b/9, b/2) when the IF term dominates.
        let inst = appendix_b_instance(0.9, 0.1).unwrap();
        let at = |eps: f64| {
            feasible_multipac(&inst.loss, &inst.distribution, &inst.hypotheses, &inst.groups, eps, 0.5, true)
                .unwrap()
                .feasible
        };
        assert!(!at(0.04));
        assert!(!at(0.05 - 1e-9));
        assert!(at(0.05 + 1e-9));
        assert!(at(0.6));
    }

    #[test]
    fn bad_weights_rejected() {
        for (a, b) in [(0.0, 0.5), (0.5, 0.0), (0.7, 0.5), (-0.1, 0.2)] {
            assert!(matches!(appendix_b_instance(a, b), Err(InstanceError::BadWeights { .. })));
        }
    }

    #[test]
    fn fpr_instance() {
        let inst = appendix_a_instance(2).unwrap();
        assert_eq!(inst.distribution.masses(), &[0.5, 0.5]);
        let h = &inst.hypotheses.get(0).predictor;
        assert_eq!(inst.loss.loss(&inst.distribution, h).unwrap(), 1.0);
        let avoiding = crate::model::Sample::new(vec![crate::model::Record::new(1, true); 5]);
        assert_eq!(inst.loss.empirical_loss(&avoiding, h).unwrap(), 0.0);
        assert!(appendix_a_instance(1).is_err());
    }

    #[test]
    fn witness_structure() {
        let d = Distribution::new(Arc::new(Domain::indexed(3).unwrap()), vec![0.5, 0.0, 0.5], vec![0.2, 0.5, 0.9]).unwrap();
        let loss = Arc::new(LossFunction::squared());
        let bayes = Predictor::new(d.label_probs().to_vec()).unwrap();
        let w = properness_witness(&loss, &d, &bayes, 0.1).unwrap();
        let names: Vec<_> = w.groups.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["at_x0", "at_x2", "support"]);
        assert_eq!(w.hypotheses.len(), 3);
        assert!((w.hypotheses.get(0).predictor.get(0) - 0.2).abs() < 0.1 / 16.0);

        let single = Distribution::new(Arc::new(Domain::indexed(2).unwrap()), vec![1.0, 0.0], vec![0.3, 0.5]).unwrap();
        assert!(properness_witness(&loss, &single, &bayes, 0.1).is_err());
        let alt = Predictor::constant(2, 0.5).unwrap();
        let w = properness_witness(&loss, &single, &alt, 0.1).unwrap();
        assert_eq!(w.groups.get(0).group, w.groups.get(1).group);
        let v = feasible_multipac(&w.loss, &w.distribution, &w.hypotheses, &w.groups, 0.0025, 0.1, false).unwrap();
        assert!(v.feasible);
    }

    #[test]
    fn witness_propagates_ambiguity() {
        let d = Distribution::new(Arc::new(Domain::indexed(1).unwrap()), vec![1.0], vec![0.5]).unwrap();
        let loss = Arc::new(LossFunction::zero_one());
        let err = properness_witness(&loss, &d, &Predictor::constant(1, 0.0).unwrap(), 0.1).unwrap_err();
        assert!(matches!(err, InstanceError::Loss(LossError::Ambiguous { .. })));
    }

    #[test]
    fn random_instances_are_deterministic_and_respect_gamma() {
        let config = RandomInstanceConfig::default();
        let a = random_instance(7, &config).unwrap();
        assert_eq!(a, random_instance(7, &config).unwrap());
        assert_ne!(a, random_instance(8, &config).unwrap());
        for seed in 0..20 {
            let inst = random_instance(seed, &config).unwrap();
            for g in inst.groups.iter() {
                assert!(inst.distribution.mass(&g.group) >= 0.25);
            }
            assert_eq!(inst.hypotheses.len(), 8);
        }
    }

    #[test]
    fn full_domain_group_and_rejection_budget() {
        let config = RandomInstanceConfig {
            num_groups: 1,
            include_full_domain: true,
            min_group_mass: 0.99,
            ..RandomInstanceConfig::default()
        };
        let inst = random_instance(1, &config).unwrap();
        assert_eq!(inst.groups.get(0).group, Group::full(10));
        let impossible = RandomInstanceConfig {
            n: 40,
            num_groups: 2,
            min_group_mass: 0.999,
            ..RandomInstanceConfig::default()
        };
        assert!(matches!(
            random_instance(1, &impossible),
            Err(InstanceError::RejectionBudgetExceeded { .. })
        ));
    }

    #[test]
    fn binary_losses_get_binary_hypotheses() {
        for kind in [LossKind::IfZeroOne, LossKind::ErrorRates] {
            let config = RandomInstanceConfig {
                loss: kind,
                include_bayes: true,
                ..RandomInstanceConfig::default()
            };
            let inst = random_instance(3, &config).unwrap();
            assert_eq!(inst.metric.is_some(), kind == LossKind::IfZeroOne);
            for h in inst.hypotheses.iter() {
                assert!(h.predictor.values().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }
}

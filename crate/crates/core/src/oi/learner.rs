//! An OI learner for finite families.
//!
//! The learner estimates per-point label frequencies when the observed
//! support is small and every observed point has been seen often enough
//! (the tabular path). Otherwise it falls back to bucketed group updates in
//! the style of multicalibration. Either way the returned predictor is only
//! released after passing [`audit_oi`].

use std::sync::Arc;

use super::{audit_oi, Distinguisher, OiError, OiReport};
use crate::losses::bucket_of;
use crate::model::{rng, Distribution, Domain, LabelCounts, Predictor, Sample};

/// Where training data comes from.
#[derive(Debug, Clone, Copy)]
pub enum TrainingSource<'a> {
    /// A known distribution: training draws are simulated and audits run
    /// against the truth.
    Planted(&'a Distribution),
    /// A finite record stream. The trailing quarter is held out and its
    /// empirical distribution serves as the audit world.
    Records { sample: &'a Sample, domain: &'a Arc<Domain> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OiLearnerConfig {
    /// `C` in the budget `C * k * ln(|A| / eta) / tau^4`.
    pub budget_constant: f64,
    /// Tabular estimates are used once every observed point has this many draws.
    pub min_samples_per_point: u64,
    /// Largest observed support handled by the tabular path.
    pub max_tabular_support: usize,
    /// Bucket width for boosting-path level sets.
    pub bucket_width: f64,
    /// Audit rounds before giving up.
    pub max_rounds: usize,
}

impl Default for OiLearnerConfig {
    fn default() -> Self {
        Self {
            budget_constant: 64.0,
            min_samples_per_point: 50,
            max_tabular_support: 10_000,
            bucket_width: 0.1,
            max_rounds: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerPath {
    /// Empty family: nothing to be indistinguishable from.
    Trivial,
    Tabular,
    Boosting,
}

impl LearnerPath {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerPath::Trivial => "trivial",
            LearnerPath::Tabular => "tabular",
            LearnerPath::Boosting => "boosting",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OiLearnOutcome {
    pub predictor: Predictor,
    pub samples_consumed: u64,
    pub budget: f64,
    pub rounds: usize,
    pub path: LearnerPath,
    pub report: Option<OiReport>,
}

/// Training-sample cap `C * k * ln(|A| / eta) / tau^4`.
pub fn learner_budget(k: u64, family_size: usize, tau: f64, eta: f64, constant: f64) -> f64 {
    let family = family_size.max(1) as f64;
    constant * k as f64 * (family / eta).ln().max(1.0) / tau.powi(4)
}

struct Trainer<'a> {
    source: TrainingSource<'a>,
    audit_world: Distribution,
    counts: LabelCounts,
    consumed: u64,
    cap: u64,
    rng: rng::Rng,
}

impl<'a> Trainer<'a> {
    fn new(source: TrainingSource<'a>, budget: f64, seed: u64) -> Result<Self, OiError> {
        let budget_cap = if budget >= u64::MAX as f64 { u64::MAX } else { budget as u64 };
        let (audit_world, n, cap) = match source {
            TrainingSource::Planted(d) => (d.clone(), d.len(), budget_cap),
            TrainingSource::Records { sample, domain } => {
                if sample.is_empty() {
                    return Err(OiError::InvalidParameter("record stream is empty".into()));
                }
                let train_len = sample.len() - sample.len() / 4;
                let (train, holdout) = sample.split_at(train_len);
                let world_sample = if holdout.is_empty() { &train } else { &holdout };
                let world = world_sample.empirical_distribution(Arc::clone(domain))?;
                (world, domain.len(), budget_cap.min(train_len as u64))
            }
        };
        Ok(Self {
            source,
            audit_world,
            counts: LabelCounts::zeros(n),
            consumed: 0,
            cap,
            rng: rng::stream(seed, 0),
        })
    }

    /// Draw until `target` samples have been consumed (capped).
    fn draw_to(&mut self, target: u64) {
        let target = target.min(self.cap);
        if target <= self.consumed {
            return;
        }
        let extra = target - self.consumed;
        match self.source {
            TrainingSource::Planted(d) => {
                let batch = d.sample_counts(extra, &mut self.rng);
                self.counts.merge(&batch);
            }
            TrainingSource::Records { sample, .. } => {
                for r in &sample.records()[self.consumed as usize..target as usize] {
                    self.counts.add(r.point, r.label);
                }
            }
        }
        self.consumed = target;
    }

    fn can_grow(&self) -> bool {
        self.consumed < self.cap
    }
}

/// Learn `p` that is `(tau, family)`-OI with probability `1 - eta`.
///
/// Audits use confidence `eta / 2`. On failure after `max_rounds` audits or
/// at the budget, returns [`OiError::BudgetExhausted`] naming the failing
/// distinguishers.
pub fn learn_oi(
    source: TrainingSource<'_>,
    family: &[Distinguisher],
    tau: f64,
    eta: f64,
    seed: u64,
    config: &OiLearnerConfig,
) -> Result<OiLearnOutcome, OiError> {
    for (name, v) in [("tau", tau), ("eta", eta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(OiError::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
        }
    }
    let n = match source {
        TrainingSource::Planted(d) => d.len(),
        TrainingSource::Records { domain, .. } => domain.len(),
    };
    if family.is_empty() {
        return Ok(OiLearnOutcome {
            predictor: Predictor::constant(n, 0.0)?,
            samples_consumed: 0,
            budget: 0.0,
            rounds: 0,
            path: LearnerPath::Trivial,
            report: None,
        });
    }
    let k = family.iter().map(|a| a.k).max().unwrap_or(1);
    let budget = learner_budget(k, family.len(), tau, eta, config.budget_constant);
    let mut trainer = Trainer::new(source, budget, rng::derive_seed(seed, 0))?;
    let audit_confidence = eta / 2.0;
    let audit_seed = |round: usize| rng::derive_seed(seed, 1 + round as u64);

    let initial = ((2.0 * family.len() as f64 / eta).ln() / (2.0 * tau * tau)).ceil().max(1.0) as u64;
    let mut target = initial;
    let mut rounds = 0;
    loop {
        trainer.draw_to(target);
        if trainer.counts.observed_support() > config.max_tabular_support {
            break;
        }
        let thin = trainer
            .counts
            .min_observed_count()
            .is_none_or(|c| c < config.min_samples_per_point);
        if thin && trainer.can_grow() {
            target = trainer.consumed.saturating_mul(2);
            continue;
        }
        let p = Predictor::new(trainer.counts.label_means(0.0))?;
        let report = audit_oi(&p, family, &trainer.audit_world, tau, audit_confidence, audit_seed(rounds))?;
        rounds += 1;
        if report.pass {
            return Ok(OiLearnOutcome {
                predictor: p,
                samples_consumed: trainer.consumed,
                budget,
                rounds,
                path: LearnerPath::Tabular,
                report: Some(report),
            });
        }
        if rounds >= config.max_rounds || !trainer.can_grow() {
            return Err(exhausted(&report, trainer.consumed));
        }
        target = trainer.consumed.saturating_mul(2);
    }

    boost(trainer, family, tau, audit_confidence, budget, rounds, seed, config)
}

#[allow(clippy::too_many_arguments)]
fn boost(
    mut trainer: Trainer<'_>,
    family: &[Distinguisher],
    tau: f64,
    audit_confidence: f64,
    budget: f64,
    mut rounds: usize,
    seed: u64,
    config: &OiLearnerConfig,
) -> Result<OiLearnOutcome, OiError> {
    let total = trainer.counts.total().max(1);
    let positives: u64 = trainer.counts.observed().map(|i| trainer.counts.positives(i)).sum();
    let mut values = vec![positives as f64 / total as f64; trainer.counts.label_means(0.0).len()];
    loop {
        let p = Predictor::new(values.clone())?;
        let report = audit_oi(
            &p,
            family,
            &trainer.audit_world,
            tau,
            audit_confidence,
            rng::derive_seed(seed, 1 + rounds as u64),
        )?;
        rounds += 1;
        if report.pass {
            return Ok(OiLearnOutcome {
                predictor: p,
                samples_consumed: trainer.consumed,
                budget,
                rounds,
                path: LearnerPath::Boosting,
                report: Some(report),
            });
        }
        if rounds >= config.max_rounds {
            return Err(exhausted(&report, trainer.consumed));
        }
        for (a, row) in family.iter().zip(&report.rows) {
            if !row.pass {
                recalibrate_on_group(&mut values, a, &trainer.counts, config.bucket_width);
            }
        }
        if trainer.can_grow() {
            trainer.draw_to(trainer.consumed.saturating_mul(2));
        }
    }
}

/// Within `a`'s group, move each prediction level set to the empirical label
/// mean of its members.
fn recalibrate_on_group(values: &mut [f64], a: &Distinguisher, counts: &LabelCounts, width: f64) {
    let members = a.group.members();
    let buckets: Vec<usize> = members.iter().map(|&i| bucket_of(values[i], width)).collect();
    let mut order: Vec<usize> = buckets.clone();
    order.sort_unstable();
    order.dedup();
    for b in order {
        let (mut total, mut positives) = (0u64, 0u64);
        for (&i, _) in members.iter().zip(&buckets).filter(|(_, &bb)| bb == b) {
            total += counts.count(i);
            positives += counts.positives(i);
        }
        if total == 0 {
            continue;
        }
        let mean = (positives as f64 / total as f64).clamp(0.0, 1.0);
        for (&i, _) in members.iter().zip(&buckets).filter(|(_, &bb)| bb == b) {
            values[i] = mean;
        }
    }
}

fn exhausted(report: &OiReport, samples_consumed: u64) -> OiError {
    OiError::BudgetExhausted {
        failing: report.failing().map(|r| r.distinguisher.clone()).collect(),
        samples_consumed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{FProperTransform, LossFunction};
    use crate::model::{Group, Record};

    fn family(group: Group, n: usize, k: u64) -> Vec<Distinguisher> {
        [0.0, 0.5, 1.0]
            .iter()
            .map(|&c| {
                Distinguisher::new(
                    "g",
                    group.clone(),
                    format!("c{c}"),
                    Predictor::constant(n, c).unwrap(),
                    0.05,
                    k,
                    Arc::new(LossFunction::squared()),
                    Arc::new(FProperTransform::Identity),
                )
                .unwrap()
            })
            .collect()
    }

    fn dist(mass: &[f64], z: &[f64]) -> Distribution {
        Distribution::new(Arc::new(Domain::indexed(mass.len()).unwrap()), mass.to_vec(), z.to_vec()).unwrap()
    }

    #[test]
    fn budget_formula() {
        let b = learner_budget(500, 100, 0.1, 0.1, 64.0);
        assert!((b / 2.2105e9 - 1.0).abs() < 1e-3, "{b}");
    }

    #[test]
    fn empty_family_returns_zero_predictor() {
        let d = dist(&[0.5, 0.5], &[0.3, 0.7]);
        let out = learn_oi(TrainingSource::Planted(&d), &[], 0.1, 0.1, 0, &OiLearnerConfig::default()).unwrap();
        assert_eq!(out.path, LearnerPath::Trivial);
        assert_eq!(out.predictor.values(), &[0.0, 0.0]);
        assert_eq!(out.samples_consumed, 0);
    }

    #[test]
    fn tabular_path_recovers_conditional_means() {
        let d = dist(&[0.4, 0.35, 0.25], &[0.1, 0.5, 0.8]);
        let fam = family(Group::full(3), 3, 100);
        let out = learn_oi(TrainingSource::Planted(&d), &fam, 0.2, 0.1, 5, &OiLearnerConfig::default()).unwrap();
        assert_eq!(out.path, LearnerPath::Tabular);
        assert!(out.report.as_ref().unwrap().pass);
        assert!(out.samples_consumed as f64 <= out.budget);
        for (est, truth) in out.predictor.values().iter().zip(d.label_probs()) {
            assert!((est - truth).abs() < 0.15);
        }
    }

    #[test]
    fn boosting_path_on_constant_conditional() {
        let d = dist(&[0.3, 0.3, 0.4], &[0.6, 0.6, 0.6]);
        let fam = family(Group::full(3), 3, 100);
        let config = OiLearnerConfig {
            max_tabular_support: 0,
            ..OiLearnerConfig::default()
        };
        let out = learn_oi(TrainingSource::Planted(&d), &fam, 0.2, 0.1, 2, &config).unwrap();
        assert_eq!(out.path, LearnerPath::Boosting);
        assert!(out.report.unwrap().pass);
    }

    #[test]
    fn record_stream_source() {
        let domain = Arc::new(Domain::indexed(2).unwrap());
        let mut records = Vec::new();
        for i in 0..4000 {
            records.push(Record::new(i % 2, i % 4 == 0));
        }
        let sample = Sample::new(records);
        let fam = family(Group::full(2), 2, 50);
        let out = learn_oi(
            TrainingSource::Records {
                sample: &sample,
                domain: &domain,
            },
            &fam,
            0.2,
            0.1,
            1,
            &OiLearnerConfig::default(),
        )
        .unwrap();
        assert!(out.samples_consumed <= 3000);
        assert!((out.predictor.get(0) - 0.5).abs() < 0.05);
        assert_eq!(out.predictor.get(1), 0.0);
    }
}

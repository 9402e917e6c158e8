use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::losses::{LossError, LossFunction};
use crate::model::{rng, Distribution, HypothesisCollection, WeightedPoint};

/// Empirical law of `sup_h |L_S(h) - L_D(h)|` over independent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UcSummary {
    pub m: usize,
    pub reps: usize,
    /// One sup-deviation per repetition, in repetition order.
    pub deviations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UcQuantiles {
    pub m: usize,
    pub reps: usize,
    pub mean: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

impl UcSummary {
    /// Fraction of repetitions with deviation `>= threshold - 1e-12`.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        let hits = self.deviations.iter().filter(|&&d| d >= threshold - 1e-12).count();
        hits as f64 / self.reps as f64
    }

    pub fn fraction_at_most(&self, threshold: f64) -> f64 {
        let hits = self.deviations.iter().filter(|&&d| d <= threshold + 1e-12).count();
        hits as f64 / self.reps as f64
    }

    /// Nearest-rank quantile.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut sorted = self.deviations.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        sorted[rank - 1]
    }

    pub fn quantiles(&self) -> UcQuantiles {
        UcQuantiles {
            m: self.m,
            reps: self.reps,
            mean: self.deviations.iter().sum::<f64>() / self.reps as f64,
            q50: self.quantile(0.5),
            q90: self.quantile(0.9),
            q99: self.quantile(0.99),
            max: self.quantile(1.0),
        }
    }
}

/// Draw `reps` independent size-`m` samples from `d` and record, for each,
/// the largest deviation between empirical and true loss over `hypotheses`.
///
/// Repetition `i` uses its own stream derived from `seed`, so results do not
/// depend on thread scheduling.
pub fn uc_estimate(
    loss: &LossFunction,
    hypotheses: &HypothesisCollection,
    d: &Distribution,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<UcSummary, LossError> {
    if m == 0 || reps == 0 {
        return Err(LossError::InvalidParameter("sample size and repetitions must be positive".into()));
    }
    let truth: Vec<f64> = hypotheses
        .iter()
        .map(|h| loss.loss(d, &h.predictor))
        .collect::<Result<_, _>>()?;
    let support = d.support();
    let alias = WeightedAliasIndex::new(support.iter().map(|p| p.mass).collect::<Vec<_>>())
        .expect("support masses are positive");
    let deviations = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(rng::derive_seed(seed, rep as u64), 0);
            let mut draws: Vec<(usize, bool)> = (0..m)
                .map(|_| {
                    let p = &support[alias.sample(&mut r)];
                    (p.index, r.random_bool(p.label_prob))
                })
                .collect();
            draws.sort_unstable();
            let points = aggregate(&draws, m);
            let mut worst: f64 = 0.0;
            for (h, &true_loss) in hypotheses.iter().zip(&truth) {
                let empirical = loss.evaluate_points(&points, |i| h.predictor.get(i))?;
                worst = worst.max((empirical - true_loss).abs());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>, LossError>>()?;
    Ok(UcSummary { m, reps, deviations })
}

// sorted draws -> empirical weighted support
fn aggregate(draws: &[(usize, bool)], m: usize) -> Vec<WeightedPoint> {
    let mut points: Vec<WeightedPoint> = Vec::new();
    let mut counts: Vec<(u64, u64)> = Vec::new();
    for &(index, label) in draws {
        if points.last().is_none_or(|p| p.index != index) {
            points.push(WeightedPoint {
                index,
                mass: 0.0,
                label_prob: 0.0,
            });
            counts.push((0, 0));
        }
        let c = counts.last_mut().expect("pushed above");
        c.0 += 1;
        c.1 += u64::from(label);
    }
    for (p, (total, positives)) in points.iter_mut().zip(counts) {
        p.mass = total as f64 / m as f64;
        p.label_prob = positives as f64 / total as f64;
    }
    points
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{Domain, NamedPredictor, Predictor};

    fn uniform(n: usize, z: Vec<f64>) -> Distribution {
        Distribution::new(Arc::new(Domain::indexed(n).unwrap()), vec![1.0 / n as f64; n], z).unwrap()
    }

    fn class(n: usize, values: &[f64]) -> HypothesisCollection {
        HypothesisCollection::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &c)| NamedPredictor {
                    name: format!("c{i}"),
                    predictor: Predictor::constant(n, c).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn large_samples_of_deterministic_labels_converge() {
        let d = uniform(4, vec![0.0, 1.0, 1.0, 0.0]);
        let s = uc_estimate(&LossFunction::zero_one(), &class(4, &[0.0, 1.0]), &d, 100_000, 20, 1).unwrap();
        assert!(s.quantile(1.0) < 0.01, "{:?}", s.quantiles());
    }

    #[test]
    fn hoeffding_sized_samples_concentrate() {
        let d = uniform(5, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        let h = class(5, &[0.0, 0.5, 1.0]);
        let loss = LossFunction::squared();
        let m = loss.uc_sample_bound(0.1, 0.1, h.len()).unwrap() as usize;
        let s = uc_estimate(&loss, &h, &d, m, 500, 2).unwrap();
        assert!(s.fraction_at_most(0.1) >= 0.9);
    }

    #[test]
    fn reproducible_and_validated() {
        let d = uniform(3, vec![0.2, 0.5, 0.8]);
        let h = class(3, &[0.5]);
        let a = uc_estimate(&LossFunction::squared(), &h, &d, 10, 50, 9).unwrap();
        assert_eq!(a, uc_estimate(&LossFunction::squared(), &h, &d, 10, 50, 9).unwrap());
        assert!(uc_estimate(&LossFunction::squared(), &h, &d, 0, 5, 9).is_err());
        assert!(uc_estimate(&LossFunction::squared(), &h, &d, 5, 0, 9).is_err());
    }

    #[test]
    fn quantiles_use_nearest_rank() {
        let s = UcSummary {
            m: 1,
            reps: 4,
            deviations: vec![0.4, 0.1, 0.3, 0.2],
        };
        assert_eq!(s.quantile(0.5), 0.2);
        assert_eq!(s.quantile(0.9), 0.4);
        assert_eq!(s.fraction_at_least(0.3), 0.5);
        assert_eq!(s.fraction_at_most(0.1), 0.25);
    }
}

use std::sync::Arc;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution as _};

use super::rng;
use super::{Domain, Group, LabelCounts, ModelError, Predictor, Record, Sample};

/// Accepted distance of input masses from summing to one.
pub const INPUT_MASS_TOLERANCE: f64 = 1e-6;
/// Distance from one that stored masses are kept within.
pub const MAINTAINED_MASS_TOLERANCE: f64 = 1e-12;

/// A point of a finite distribution together with its mass and `Pr[y = 1 | x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub index: usize,
    pub mass: f64,
    pub label_prob: f64,
}

/// Finite joint distribution over `domain x {0, 1}`.
///
/// Stored as the marginal mass of every point and the conditional
/// probability of label 1 at that point.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    domain: Arc<Domain>,
    mass: Vec<f64>,
    label_prob: Vec<f64>,
}

fn normalize(mut mass: Vec<f64>, sum: f64) -> Vec<f64> {
    if (sum - 1.0).abs() > MAINTAINED_MASS_TOLERANCE {
        for m in &mut mass {
            *m /= sum;
        }
    }
    mass
}

impl Distribution {
    pub fn new(domain: Arc<Domain>, mass: Vec<f64>, label_prob: Vec<f64>) -> Result<Self, ModelError> {
        let n = domain.len();
        if mass.len() != n {
            return Err(ModelError::LengthMismatch {
                what: "mass",
                expected: n,
                got: mass.len(),
            });
        }
        if label_prob.len() != n {
            return Err(ModelError::LengthMismatch {
                what: "label_prob",
                expected: n,
                got: label_prob.len(),
            });
        }
        for (index, &value) in mass.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::NegativeMass { index, value });
            }
        }
        for (index, &value) in label_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::OutOfUnitInterval {
                    what: "label_prob",
                    index,
                    value,
                });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > INPUT_MASS_TOLERANCE {
            return Err(ModelError::MassSumOutOfTolerance { sum });
        }
        Ok(Self {
            domain,
            mass: normalize(mass, sum),
            label_prob,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn label_probs(&self) -> &[f64] {
        &self.label_prob
    }

    pub fn mass_of(&self, index: usize) -> f64 {
        self.mass[index]
    }

    pub fn label_prob(&self, index: usize) -> f64 {
        self.label_prob[index]
    }

    /// Total mass of `group`.
    pub fn mass(&self, group: &Group) -> f64 {
        group.members().iter().map(|&i| self.mass[i]).sum()
    }

    /// Indices with positive mass.
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    pub fn support(&self) -> Vec<WeightedPoint> {
        self.mass
            .iter()
            .zip(&self.label_prob)
            .enumerate()
            .filter(|(_, (&m, _))| m > 0.0)
            .map(|(index, (&mass, &label_prob))| WeightedPoint {
                index,
                mass,
                label_prob,
            })
            .collect()
    }

    /// Conditional distribution on `group`.
    pub fn restrict(&self, group: &Group) -> Result<Self, ModelError> {
        let total = self.mass(group);
        if total <= 0.0 {
            return Err(ModelError::EmptyGroupMass);
        }
        let mut mass = vec![0.0; self.len()];
        for &i in group.members() {
            mass[i] = self.mass[i];
        }
        Ok(Self {
            domain: Arc::clone(&self.domain),
            mass: normalize(mass, total),
            label_prob: self.label_prob.clone(),
        })
    }

    /// Same marginal, labels drawn from `Bernoulli(p(x))`.
    pub fn modeled(&self, p: &Predictor) -> Result<Self, ModelError> {
        if p.len() != self.len() {
            return Err(ModelError::LengthMismatch {
                what: "predictor",
                expected: self.len(),
                got: p.len(),
            });
        }
        Ok(Self {
            domain: Arc::clone(&self.domain),
            mass: self.mass.clone(),
            label_prob: p.values().to_vec(),
        })
    }

    /// `m` i.i.d. labeled records, reproducible from `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> Sample {
        let mut rng = rng::stream(seed, 0);
        self.sample_with(m, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Sample {
        if m == 0 {
            return Sample::default();
        }
        let alias = WeightedAliasIndex::new(self.mass.clone())
            .expect("distribution masses are finite, non-negative and sum to one");
        let records = (0..m)
            .map(|_| {
                let point = alias.sample(rng);
                let label = rng.random_bool(self.label_prob[point]);
                Record::new(point, label)
            })
            .collect();
        Sample::new(records)
    }

    /// Per-point totals and positive counts of `m` i.i.d. draws.
    ///
    /// Distributed exactly as the tally of `sample_with(m, ..)`, at cost
    /// `O(n)` independent of `m`.
    pub fn sample_counts<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> LabelCounts {
        let mut totals = vec![0u64; self.len()];
        multinomial_into(m, &self.mass, &mut totals, rng);
        let positives = totals
            .iter()
            .zip(&self.label_prob)
            .map(|(&c, &z)| binomial(c, z, rng))
            .collect();
        LabelCounts::from_parts(totals, positives)
    }
}

/// Draw `Binomial(n, p)`; `p` is clamped into `[0, 1]`.
pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

/// Multinomial counts for `total` draws over `weights` (need not be normalized).
pub(crate) fn multinomial_into<R: Rng + ?Sized>(total: u64, weights: &[f64], out: &mut [u64], rng: &mut R) {
    debug_assert_eq!(weights.len(), out.len());
    let mut remaining = total;
    let mut remaining_weight: f64 = weights.iter().sum();
    let last_positive = weights.iter().rposition(|&w| w > 0.0);
    for (i, (&w, slot)) in weights.iter().zip(out.iter_mut()).enumerate() {
        if remaining == 0 || w <= 0.0 {
            *slot = 0;
            continue;
        }
        let c = if Some(i) == last_positive {
            remaining
        } else {
            binomial(remaining, w / remaining_weight, rng)
        };
        *slot = c;
        remaining -= c;
        remaining_weight -= w;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(n: usize) -> Arc<Domain> {
        Arc::new(Domain::indexed(n).unwrap())
    }

    fn three_point() -> Distribution {
        Distribution::new(domain(3), vec![0.8, 0.1, 0.1], vec![0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Distribution::new(domain(2), vec![0.5, 0.6], vec![0.0, 0.0]),
            Err(ModelError::MassSumOutOfTolerance { .. })
        ));
        assert!(matches!(
            Distribution::new(domain(2), vec![1.5, -0.5], vec![0.0, 0.0]),
            Err(ModelError::NegativeMass { index: 1, .. })
        ));
        assert!(matches!(
            Distribution::new(domain(2), vec![1.0], vec![0.0, 0.0]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn singleton_and_small_drift_normalized() {
        let d = Distribution::new(domain(1), vec![1.0], vec![0.3]).unwrap();
        assert_eq!(d.masses(), &[1.0]);
        let d = Distribution::new(domain(2), vec![0.5, 0.5000005], vec![0.0, 0.0]).unwrap();
        assert!((d.masses().iter().sum::<f64>() - 1.0).abs() <= MAINTAINED_MASS_TOLERANCE);
    }

    #[test]
    fn group_mass() {
        let d = three_point();
        let t = Group::new(vec![1, 2], 3).unwrap();
        assert!((d.mass(&t) - 0.2).abs() < 1e-15);
        assert_eq!(d.mass(&Group::empty()), 0.0);
        assert!((d.mass(&Group::full(3)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn restrict_three_point_group_s() {
        let d = three_point();
        let s = Group::new(vec![0, 2], 3).unwrap();
        let ds = d.restrict(&s).unwrap();
        assert!((ds.mass_of(0) - 8.0 / 9.0).abs() < 1e-15);
        assert!((ds.mass_of(2) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(ds.mass_of(1), 0.0);
        assert_eq!(ds.restrict(&s).unwrap(), ds);
        assert_eq!(d.restrict(&Group::full(3)).unwrap(), d);
        assert_eq!(d.restrict(&Group::empty()), Err(ModelError::EmptyGroupMass));
    }

    #[test]
    fn modeled_distribution_keeps_marginal() {
        let d = three_point();
        let ones = Predictor::constant(3, 1.0).unwrap();
        let dt = d.modeled(&ones).unwrap();
        assert_eq!(dt.masses(), d.masses());
        assert_eq!(dt.label_probs(), &[1.0, 1.0, 1.0]);
        let bayes = Predictor::new(d.label_probs().to_vec()).unwrap();
        assert_eq!(d.modeled(&bayes).unwrap(), d);
    }

    #[test]
    fn sampling_is_reproducible_and_degenerate_labels_hold() {
        let d = Distribution::new(domain(3), vec![0.2, 0.3, 0.5], vec![1.0; 3]).unwrap();
        let a = d.sample(200, 11);
        assert_eq!(a, d.sample(200, 11));
        assert!(a.records().iter().all(|r| r.label));
        assert!(d.sample(0, 1).is_empty());
    }

    #[test]
    fn empirical_frequency_of_heavy_point() {
        let d = three_point();
        let s = d.sample(100_000, 3);
        let freq = s.records().iter().filter(|r| r.point == 0).count() as f64 / 1e5;
        assert!((freq - 0.8).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut r = rng::stream(5, 0);
        let mut out = vec![0; 4];
        multinomial_into(1_000_000, &[0.1, 0.0, 0.6, 0.3], &mut out, &mut r);
        assert_eq!(out.iter().sum::<u64>(), 1_000_000);
        assert_eq!(out[1], 0);
        assert!((out[2] as f64 / 1e6 - 0.6).abs() < 0.005);
    }
}

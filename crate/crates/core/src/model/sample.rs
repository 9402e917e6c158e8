use std::sync::Arc;

use super::{Distribution, Domain, Group, ModelError, WeightedPoint};

/// One labeled draw, optionally carrying a prediction `p_i` for that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub point: usize,
    pub label: bool,
    pub prediction: Option<f64>,
}

impl Record {
    pub fn new(point: usize, label: bool) -> Self {
        Self {
            point,
            label,
            prediction: None,
        }
    }

    pub fn with_prediction(point: usize, label: bool, prediction: f64) -> Self {
        Self {
            point,
            label,
            prediction: Some(prediction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    records: Vec<Record>,
}

impl Sample {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    /// Validating constructor for externally supplied records.
    pub fn checked(records: Vec<Record>, domain_size: usize) -> Result<Self, ModelError> {
        for (index, r) in records.iter().enumerate() {
            if r.point >= domain_size {
                return Err(ModelError::PointOutOfRange {
                    index: r.point,
                    size: domain_size,
                });
            }
            if let Some(p) = r.prediction {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ModelError::OutOfUnitInterval {
                        what: "record prediction",
                        index,
                        value: p,
                    });
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_at(&self, mid: usize) -> (Sample, Sample) {
        let (a, b) = self.records.split_at(mid.min(self.records.len()));
        (Sample::new(a.to_vec()), Sample::new(b.to_vec()))
    }

    pub fn tally(&self, domain_size: usize) -> LabelCounts {
        let mut counts = LabelCounts::zeros(domain_size);
        for r in &self.records {
            counts.add(r.point, r.label);
        }
        counts
    }

    /// Empirical distribution: mass `count(x)/|S|`, label probability the
    /// label mean at `x` (zero where unobserved).
    pub fn empirical_distribution(&self, domain: Arc<Domain>) -> Result<Distribution, ModelError> {
        if self.is_empty() {
            return Err(ModelError::MassSumOutOfTolerance { sum: 0.0 });
        }
        self.tally(domain.len()).to_distribution(domain)
    }
}

/// Sufficient statistic of a sample: per-point totals and positives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelCounts {
    totals: Vec<u64>,
    positives: Vec<u64>,
}

impl LabelCounts {
    pub fn zeros(n: usize) -> Self {
        Self {
            totals: vec![0; n],
            positives: vec![0; n],
        }
    }

    pub(crate) fn from_parts(totals: Vec<u64>, positives: Vec<u64>) -> Self {
        debug_assert!(totals.iter().zip(&positives).all(|(t, p)| p <= t));
        Self { totals, positives }
    }

    pub fn add(&mut self, point: usize, label: bool) {
        self.totals[point] += 1;
        self.positives[point] += u64::from(label);
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        for (a, b) in self.positives.iter_mut().zip(&other.positives) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }

    pub fn count(&self, point: usize) -> u64 {
        self.totals[point]
    }

    pub fn positives(&self, point: usize) -> u64 {
        self.positives[point]
    }

    pub fn observed(&self) -> impl Iterator<Item = usize> + '_ {
        self.totals.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i)
    }

    pub fn observed_support(&self) -> usize {
        self.totals.iter().filter(|&&c| c > 0).count()
    }

    /// Smallest positive count, `None` when nothing was observed.
    pub fn min_observed_count(&self) -> Option<u64> {
        self.totals.iter().copied().filter(|&c| c > 0).min()
    }

    /// Label mean per point; `default` where unobserved.
    pub fn label_means(&self, default: f64) -> Vec<f64> {
        self.totals
            .iter()
            .zip(&self.positives)
            .map(|(&t, &p)| if t == 0 { default } else { p as f64 / t as f64 })
            .collect()
    }

    /// Empirical weighted support, optionally restricted to `group`.
    pub fn weighted_points(&self, group: Option<&Group>) -> Vec<WeightedPoint> {
        let mut out = Vec::new();
        self.weighted_points_into(group, &mut out);
        out
    }

    pub(crate) fn weighted_points_into(&self, group: Option<&Group>, out: &mut Vec<WeightedPoint>) {
        out.clear();
        let keep = |i: usize| group.is_none_or(|g| g.contains(i));
        let total: u64 = self
            .totals
            .iter()
            .enumerate()
            .filter(|&(i, _)| keep(i))
            .map(|(_, &c)| c)
            .sum();
        if total == 0 {
            return;
        }
        for (i, (&t, &p)) in self.totals.iter().zip(&self.positives).enumerate() {
            if t > 0 && keep(i) {
                out.push(WeightedPoint {
                    index: i,
                    mass: t as f64 / total as f64,
                    label_prob: p as f64 / t as f64,
                });
            }
        }
    }

    pub fn to_distribution(&self, domain: Arc<Domain>) -> Result<Distribution, ModelError> {
        let total = self.total();
        if total == 0 {
            return Err(ModelError::MassSumOutOfTolerance { sum: 0.0 });
        }
        let mass = self.totals.iter().map(|&c| c as f64 / total as f64).collect();
        Distribution::new(domain, mass, self.label_means(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_and_empirical_distribution() {
        let s = Sample::new(vec![
            Record::new(0, true),
            Record::new(0, false),
            Record::new(2, true),
            Record::new(0, true),
        ]);
        let counts = s.tally(3);
        assert_eq!(counts.total(), 4);
        assert_eq!(counts.observed_support(), 2);
        assert_eq!(counts.min_observed_count(), Some(1));
        let d = s.empirical_distribution(Arc::new(Domain::indexed(3).unwrap())).unwrap();
        assert_eq!(d.masses(), &[0.75, 0.0, 0.25]);
        assert!((d.label_prob(0) - 2.0 / 3.0).abs() < 1e-15);
        let g = Group::new(vec![2], 3).unwrap();
        let w = counts.weighted_points(Some(&g));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].mass, 1.0);
    }

    #[test]
    fn checked_rejects_out_of_range() {
        assert!(Sample::checked(vec![Record::new(5, true)], 3).is_err());
        assert!(Sample::checked(vec![Record::with_prediction(0, true, 1.2)], 3).is_err());
    }
}

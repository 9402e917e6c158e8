use std::sync::Arc;

use rand::Rng;

use super::OiError;
use crate::losses::{FProperTransform, LossFunction};
use crate::model::distribution::{binomial, multinomial_into};
use crate::model::{Distribution, Group, LabelCounts, Predictor, Record, Sample, WeightedPoint};

/// The acceptor `A^{L,f,k}_{g,h,alpha}`.
#[derive(Debug, Clone)]
pub struct Distinguisher {
    pub name: String,
    pub group_name: String,
    pub group: Group,
    pub hypothesis_name: String,
    pub hypothesis: Predictor,
    pub alpha: f64,
    pub k: u64,
    pub loss: Arc<LossFunction>,
    pub transform: Arc<FProperTransform>,
}

impl Distinguisher {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        group_name: impl Into<String>,
        group: Group,
        hypothesis_name: impl Into<String>,
        hypothesis: Predictor,
        alpha: f64,
        k: u64,
        loss: Arc<LossFunction>,
        transform: Arc<FProperTransform>,
    ) -> Result<Self, OiError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(OiError::InvalidParameter(format!("alpha = {alpha} must be positive")));
        }
        if k == 0 {
            return Err(OiError::InvalidParameter("k must be at least 1".into()));
        }
        let group_name = group_name.into();
        let hypothesis_name = hypothesis_name.into();
        Ok(Self {
            name: format!("A[{group_name},{hypothesis_name}]"),
            group_name,
            group,
            hypothesis_name,
            hypothesis,
            alpha,
            k,
            loss,
            transform,
        })
    }

    /// Accept iff `L_{S_g}(f_g) < L_{S_g}(h) + 2 alpha`; an empty `S_g` accepts.
    pub(crate) fn decide<F: Fn(usize) -> f64>(&self, sub_sample: &[WeightedPoint], f_g: F) -> Result<bool, OiError> {
        if sub_sample.is_empty() {
            return Ok(true);
        }
        let transformed = self.loss.evaluate_points(sub_sample, f_g)?;
        let benchmark = self.loss.evaluate_points(sub_sample, |i| self.hypothesis.get(i))?;
        Ok(transformed < benchmark + 2.0 * self.alpha)
    }

    /// Run on explicit tuples. A point repeated with different `p_i` uses
    /// its first occurrence.
    pub fn accepts(&self, tuples: &Sample) -> Result<bool, OiError> {
        if tuples.len() as u64 != self.k {
            return Err(OiError::WrongArity {
                expected: self.k,
                got: tuples.len(),
            });
        }
        let n = self.hypothesis.len();
        let mut first_prediction: Vec<Option<f64>> = vec![None; n];
        let mut in_group = LabelCounts::zeros(n);
        for (index, r) in tuples.records().iter().enumerate() {
            let p = r.prediction.ok_or(OiError::MissingPrediction { index })?;
            if r.point >= n {
                return Err(crate::model::ModelError::PointOutOfRange { index: r.point, size: n }.into());
            }
            first_prediction[r.point].get_or_insert(p);
            if self.group.contains(r.point) {
                in_group.add(r.point, r.label);
            }
        }
        let sub_sample = in_group.weighted_points(None);
        let mut f_g = vec![0.0; n];
        for wp in &sub_sample {
            let p = first_prediction[wp.index].expect("observed point has a prediction");
            f_g[wp.index] = self.transform.apply(wp.index, p)?;
        }
        self.decide(&sub_sample, |i| f_g[i])
    }
}

/// Free-function form of [`Distinguisher::accepts`].
pub fn distinguisher_accepts(a: &Distinguisher, tuples: &Sample) -> Result<bool, OiError> {
    a.accepts(tuples)
}

/// `k` tuples `(x_i, y_i, p(x_i))` with `(x_i, y_i) ~ world`.
pub fn sample_tuples<R: Rng + ?Sized>(world: &Distribution, p: &Predictor, k: usize, rng: &mut R) -> Sample {
    let records = world
        .sample_with(k, rng)
        .records()
        .iter()
        .map(|r| Record::with_prediction(r.point, r.label, p.get(r.point)))
        .collect();
    Sample::new(records)
}

/// Per-(distinguisher, world, predictor) state for repeated trials.
///
/// With `p_i = p(x_i)` the distinguisher's decision depends on its input only
/// through the per-point counts inside the group, so a trial draws
/// `|S_g| ~ Bin(k, mass(g))`, a multinomial split over the group and binomial
/// label counts. This has exactly the law of `k` explicit i.i.d. tuples.
pub(crate) struct TrialSampler<'a> {
    distinguisher: &'a Distinguisher,
    points: Vec<usize>,
    weights: Vec<f64>,
    label_probs: Vec<f64>,
    group_mass: f64,
    f_g: Vec<f64>,
    counts: Vec<u64>,
    sub_sample: Vec<WeightedPoint>,
}

impl<'a> TrialSampler<'a> {
    pub(crate) fn new(a: &'a Distinguisher, world: &Distribution, p: &Predictor) -> Result<Self, OiError> {
        let points: Vec<usize> = a.group.members().iter().copied().filter(|&i| world.mass_of(i) > 0.0).collect();
        let weights: Vec<f64> = points.iter().map(|&i| world.mass_of(i)).collect();
        let label_probs = points.iter().map(|&i| world.label_prob(i)).collect();
        let mut f_g = vec![0.0; world.len()];
        for &i in &points {
            f_g[i] = a.transform.apply(i, p.get(i))?;
        }
        Ok(Self {
            distinguisher: a,
            group_mass: weights.iter().sum::<f64>().min(1.0),
            counts: vec![0; points.len()],
            sub_sample: Vec::with_capacity(points.len()),
            points,
            weights,
            label_probs,
            f_g,
        })
    }

    pub(crate) fn trial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool, OiError> {
        let in_group = binomial(self.distinguisher.k, self.group_mass, rng);
        if in_group == 0 {
            return Ok(true);
        }
        multinomial_into(in_group, &self.weights, &mut self.counts, rng);
        self.sub_sample.clear();
        for (j, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                let positives = binomial(c, self.label_probs[j], rng);
                self.sub_sample.push(WeightedPoint {
                    index: self.points[j],
                    mass: c as f64 / in_group as f64,
                    label_prob: positives as f64 / c as f64,
                });
            }
        }
        let f_g = &self.f_g;
        self.distinguisher.decide(&self.sub_sample, |i| f_g[i])
    }
}

/// Fraction of `trials` fresh `k`-tuples from `world` (with `p_i = p(x_i)`)
/// that `a` accepts.
pub fn acceptance_probability<R: Rng + ?Sized>(
    a: &Distinguisher,
    world: &Distribution,
    p: &Predictor,
    trials: u64,
    rng: &mut R,
) -> Result<f64, OiError> {
    if trials == 0 {
        return Err(OiError::InvalidParameter("trials must be at least 1".into()));
    }
    let mut sampler = TrialSampler::new(a, world, p)?;
    let mut accepted = 0u64;
    for _ in 0..trials {
        accepted += u64::from(sampler.trial(rng)?);
    }
    Ok(accepted as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rng, Domain};

    fn squared_distinguisher(group: Group, h: Vec<f64>, alpha: f64, k: u64) -> Distinguisher {
        Distinguisher::new(
            "g",
            group,
            "h",
            Predictor::new(h).unwrap(),
            alpha,
            k,
            Arc::new(LossFunction::squared()),
            Arc::new(FProperTransform::Identity),
        )
        .unwrap()
    }

    #[test]
    fn accept_reject_by_loss_comparison() {
        // S_g = two records at point 0 labeled 1; f_g(0) = p = 1 -> loss 0.
        let a = squared_distinguisher(Group::full(2), vec![0.0, 0.0], 0.1, 2);
        let tuples = Sample::new(vec![
            Record::with_prediction(0, true, 1.0),
            Record::with_prediction(0, true, 1.0),
        ]);
        assert!(a.accepts(&tuples).unwrap());
        // f_g loss 1 vs h loss 0: 1 >= 0 + 0.2
        let tuples = Sample::new(vec![
            Record::with_prediction(0, false, 1.0),
            Record::with_prediction(0, false, 1.0),
        ]);
        assert!(!a.accepts(&tuples).unwrap());
        // f_g loss 0.5^2, h loss 0: still within 2 alpha when alpha = 0.2
        let a = squared_distinguisher(Group::full(2), vec![0.0, 0.0], 0.2, 1);
        let one = Sample::new(vec![Record::with_prediction(1, false, 0.5)]);
        assert!(a.accepts(&one).unwrap());
        // equal losses always accept
        let a = squared_distinguisher(Group::full(2), vec![0.5, 0.5], 1e-9, 1);
        assert!(a.accepts(&one).unwrap());
    }

    #[test]
    fn empty_group_sample_accepts_and_arity_checked() {
        let a = squared_distinguisher(Group::new(vec![1], 2).unwrap(), vec![1.0, 1.0], 0.01, 2);
        let tuples = Sample::new(vec![
            Record::with_prediction(0, false, 1.0),
            Record::with_prediction(0, false, 1.0),
        ]);
        assert!(a.accepts(&tuples).unwrap());
        assert_eq!(
            a.accepts(&Sample::new(vec![Record::with_prediction(0, false, 1.0)])),
            Err(OiError::WrongArity { expected: 2, got: 1 })
        );
        assert_eq!(
            a.accepts(&Sample::new(vec![Record::new(0, false), Record::new(0, false)])),
            Err(OiError::MissingPrediction { index: 0 })
        );
    }

    #[test]
    fn first_occurrence_resolves_conflicting_predictions() {
        let a = squared_distinguisher(Group::full(1), vec![0.0], 0.05, 2);
        let first_good = Sample::new(vec![
            Record::with_prediction(0, false, 0.0),
            Record::with_prediction(0, false, 1.0),
        ]);
        let first_bad = Sample::new(vec![
            Record::with_prediction(0, false, 1.0),
            Record::with_prediction(0, false, 0.0),
        ]);
        assert!(a.accepts(&first_good).unwrap());
        assert!(!a.accepts(&first_bad).unwrap());
    }

    #[test]
    fn invalid_parameters() {
        let p = Predictor::constant(1, 0.0).unwrap();
        let l = Arc::new(LossFunction::squared());
        let f = Arc::new(FProperTransform::Identity);
        assert!(Distinguisher::new("g", Group::full(1), "h", p.clone(), 0.0, 1, l.clone(), f.clone()).is_err());
        assert!(Distinguisher::new("g", Group::full(1), "h", p, 0.1, 0, l, f).is_err());
    }

    #[test]
    fn count_sampler_matches_explicit_tuples_in_law() {
        let domain = Arc::new(Domain::indexed(3).unwrap());
        let d = Distribution::new(domain, vec![0.5, 0.3, 0.2], vec![0.2, 0.6, 0.9]).unwrap();
        let p = Predictor::new(vec![0.5, 0.5, 0.5]).unwrap();
        let a = squared_distinguisher(Group::new(vec![0, 1], 3).unwrap(), vec![0.2, 0.6, 0.0], 0.02, 8);
        let trials = 20_000;
        let fast = acceptance_probability(&a, &d, &p, trials, &mut rng::stream(1, 0)).unwrap();
        let mut r = rng::stream(2, 0);
        let mut accepted = 0;
        for _ in 0..trials {
            accepted += u64::from(a.accepts(&sample_tuples(&d, &p, 8, &mut r)).unwrap());
        }
        let slow = accepted as f64 / trials as f64;
        // two independent estimates, each with standard error <= 0.0036
        assert!((fast - slow).abs() < 0.02, "fast {fast} slow {slow}");
        assert!(fast > 0.05 && fast < 0.95, "non-degenerate check, got {fast}");
    }
}

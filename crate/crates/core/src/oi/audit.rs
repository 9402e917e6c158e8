use std::io;

use rayon::prelude::*;
use serde::Serialize;

use super::distinguisher::TrialSampler;
use super::{Distinguisher, OiError};
use crate::model::{rng, Distribution, Predictor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceGap {
    pub p_real: f64,
    pub p_model: f64,
    pub gap: f64,
    pub trials: u64,
}

/// Estimate acceptance under `D^k` and under `D(p)^k`, attaching
/// `p_i = p(x_i)` in both worlds, from `trials` fresh tuples each.
pub fn acceptance_gap(
    a: &Distinguisher,
    d: &Distribution,
    p: &Predictor,
    trials: u64,
    seed: u64,
) -> Result<AcceptanceGap, OiError> {
    if trials == 0 {
        return Err(OiError::InvalidParameter("trials must be at least 1".into()));
    }
    let modeled = d.modeled(p)?;
    let estimate = |world: &Distribution, stream: u64| -> Result<f64, OiError> {
        let mut sampler = TrialSampler::new(a, world, p)?;
        let mut r = rng::stream(seed, stream);
        let mut accepted = 0u64;
        for _ in 0..trials {
            accepted += u64::from(sampler.trial(&mut r)?);
        }
        Ok(accepted as f64 / trials as f64)
    };
    let p_real = estimate(d, 0)?;
    let p_model = estimate(&modeled, 1)?;
    Ok(AcceptanceGap {
        p_real,
        p_model,
        gap: (p_real - p_model).abs(),
        trials,
    })
}

/// Trials per distinguisher so that all `family_size` gap estimates are
/// within `tau / 2` of their true values with joint probability `1 - delta_a`
/// (Hoeffding on each of the `2 * family_size` acceptance probabilities).
pub fn audit_trials(family_size: usize, tau: f64, delta_a: f64) -> u64 {
    if family_size == 0 {
        return 0;
    }
    (8.0 * (4.0 * family_size as f64 / delta_a).ln() / (tau * tau)).ceil() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OiReportRow {
    pub distinguisher: String,
    pub group: String,
    pub hypothesis: String,
    pub p_hat_real: f64,
    pub p_hat_model: f64,
    pub gap: f64,
    pub trials: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OiReport {
    pub rows: Vec<OiReportRow>,
    pub tau: f64,
    pub delta_a: f64,
    pub trials: u64,
    pub max_gap: f64,
    pub pass: bool,
}

impl OiReport {
    pub fn failing(&self) -> impl Iterator<Item = &OiReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// Columns: distinguisher, group, hypothesis, p_hat_real, p_hat_model,
    /// gap, trials, pass.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "distinguisher",
                "group",
                "hypothesis",
                "p_hat_real",
                "p_hat_model",
                "gap",
                "trials",
                "pass",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Audit `p` for `(tau, family)`-OI under `d`.
///
/// Each gap estimate is compared against `tau / 2`; passing therefore
/// certifies every true gap is at most `tau` with probability `1 - delta_a`.
/// Distinguishers are estimated independently, each from its own RNG stream.
pub fn audit_oi(
    p: &Predictor,
    family: &[Distinguisher],
    d: &Distribution,
    tau: f64,
    delta_a: f64,
    seed: u64,
) -> Result<OiReport, OiError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(OiError::InvalidParameter(format!("tau = {tau} must lie in (0, 1)")));
    }
    if !(delta_a > 0.0 && delta_a < 1.0) {
        return Err(OiError::InvalidParameter(format!("delta_a = {delta_a} must lie in (0, 1)")));
    }
    let trials = audit_trials(family.len(), tau, delta_a);
    let threshold = tau / 2.0;
    let rows = family
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let est = acceptance_gap(a, d, p, trials, rng::derive_seed(seed, i as u64))?;
            Ok(OiReportRow {
                distinguisher: a.name.clone(),
                group: a.group_name.clone(),
                hypothesis: a.hypothesis_name.clone(),
                p_hat_real: est.p_real,
                p_hat_model: est.p_model,
                gap: est.gap,
                trials,
                pass: est.gap <= threshold,
            })
        })
        .collect::<Result<Vec<_>, OiError>>()?;
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(OiReport {
        pass: rows.iter().all(|r| r.pass),
        rows,
        tau,
        delta_a,
        trials,
        max_gap,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::losses::{FProperTransform, LossFunction};
    use crate::model::{Domain, Group};

    #[test]
    fn trial_count_formula() {
        // ceil(8 ln 80 / 0.04)
        assert_eq!(audit_trials(1, 0.2, 0.05), 877);
        assert_eq!(audit_trials(0, 0.2, 0.05), 0);
    }

    fn setup() -> (Distribution, Distinguisher) {
        let domain = Arc::new(Domain::indexed(3).unwrap());
        let d = Distribution::new(domain, vec![0.8, 0.1, 0.1], vec![0.0, 1.0, 1.0]).unwrap();
        let a = Distinguisher::new(
            "T",
            Group::new(vec![1, 2], 3).unwrap(),
            "h1",
            Predictor::constant(3, 1.0).unwrap(),
            0.01,
            50,
            Arc::new(LossFunction::squared()),
            Arc::new(FProperTransform::Identity),
        )
        .unwrap();
        (d, a)
    }

    #[test]
    fn bayes_predictor_has_small_gap() {
        let (d, a) = setup();
        let bayes = Predictor::new(d.label_probs().to_vec()).unwrap();
        let g = acceptance_gap(&a, &d, &bayes, 2_000, 4).unwrap();
        assert!(g.gap <= 2.0 / (2_000f64).sqrt());
    }

    #[test]
    fn single_trial_gap_is_binary_and_zero_trials_rejected() {
        let (d, a) = setup();
        let zero = Predictor::constant(3, 0.0).unwrap();
        let g = acceptance_gap(&a, &d, &zero, 1, 9).unwrap();
        assert!(g.gap == 0.0 || g.gap == 1.0);
        assert!(acceptance_gap(&a, &d, &zero, 0, 9).is_err());
    }

    #[test]
    fn adversarial_zero_predictor_is_caught() {
        let (d, a) = setup();
        let zero = Predictor::constant(3, 0.0).unwrap();
        let report = audit_oi(&zero, std::slice::from_ref(&a), &d, 0.1, 0.05, 1).unwrap();
        assert!(!report.pass);
        assert!(report.max_gap >= 0.5, "{report:?}");
        let again = audit_oi(&zero, std::slice::from_ref(&a), &d, 0.1, 0.05, 1).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn csv_has_expected_columns() {
        let (d, a) = setup();
        let bayes = Predictor::new(d.label_probs().to_vec()).unwrap();
        let report = audit_oi(&bayes, &[a], &d, 0.2, 0.1, 3).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("distinguisher,group,hypothesis,p_hat_real,p_hat_model,gap,trials,pass\n"));
        assert!(text.contains("\"A[T,h1]\",T,h1,"));
    }
}

//! Exact ground truth on small instances.
//!
//! Best-in-class values are computed exactly on the group-conditional
//! distributions. Feasibility is decided by exhaustive search over
//! predictors that take values on a finite grid, so infeasible verdicts are
//! relative to that grid and carry its resolution.

use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::losses::{grid_values, LossError, LossFunction};
use crate::model::{Distribution, GroupCollection, HypothesisCollection, ModelError, Predictor, WeightedPoint};

/// Largest candidate count `feasible_multipac` will enumerate.
pub const MAX_SEARCH_SPACE: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("search space of {size:.3e} candidates exceeds the limit of {limit:.0e}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },
    #[error("invalid oracle parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestInClass {
    pub index: usize,
    pub name: String,
    pub value: f64,
}

/// Exact `min_h L_{D_g}(h)`; ties go to the earliest hypothesis.
pub fn best_in_class(
    loss: &LossFunction,
    d_g: &Distribution,
    hypotheses: &HypothesisCollection,
) -> Result<BestInClass, OracleError> {
    let mut best: Option<BestInClass> = None;
    for (index, h) in hypotheses.iter().enumerate() {
        let value = loss.loss(d_g, &h.predictor)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(BestInClass {
                index,
                name: h.name.clone(),
                value,
            });
        }
    }
    best.ok_or(OracleError::Model(ModelError::EmptyHypothesisCollection))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackRow {
    pub group: String,
    pub mass: f64,
    pub best_hypothesis: String,
    pub best_value: f64,
    pub loss: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlackReport {
    pub rows: Vec<SlackRow>,
    pub epsilon: f64,
    pub max_slack: f64,
    pub pass: bool,
}

impl SlackReport {
    pub fn violations(&self) -> impl Iterator<Item = &SlackRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["group", "mass", "best_hypothesis", "best_value", "loss", "slack", "pass"])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-group slack `L_{D_g}(h) - L_{D_g}(H)`; passes iff every slack is at
/// most `epsilon`. Groups with zero mass have no conditional distribution
/// and are skipped.
pub fn verify_multipac(
    loss: &LossFunction,
    d: &Distribution,
    hypotheses: &HypothesisCollection,
    groups: &GroupCollection,
    epsilon: f64,
    h: &Predictor,
) -> Result<SlackReport, OracleError> {
    let mut rows = Vec::with_capacity(groups.len());
    for g in groups {
        let mass = d.mass(&g.group);
        if mass <= 0.0 {
            continue;
        }
        let d_g = d.restrict(&g.group)?;
        let best = best_in_class(loss, &d_g, hypotheses)?;
        let value = loss.loss(&d_g, h)?;
        let slack = value - best.value;
        rows.push(SlackRow {
            group: g.name.clone(),
            mass,
            best_hypothesis: best.name,
            best_value: best.value,
            loss: value,
            slack,
            pass: slack <= epsilon,
        });
    }
    let max_slack = rows.iter().map(|r| r.slack).fold(f64::NEG_INFINITY, f64::max);
    Ok(SlackReport {
        pass: rows.iter().all(|r| r.pass),
        max_slack: if rows.is_empty() { 0.0 } else { max_slack },
        epsilon,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupViolation {
    pub group: String,
    pub best_value: f64,
    /// `min` over candidates of `max(0, slack_g - epsilon)`.
    pub min_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub witness: Option<Predictor>,
    pub epsilon: f64,
    /// `None` for the binary grid `{0, 1}`.
    pub resolution: Option<f64>,
    pub groups: Vec<GroupViolation>,
    /// `min` over candidates of the largest group violation; 0 iff feasible.
    pub min_worst_violation: f64,
    /// `min` over candidates of the largest group slack. Exact when
    /// infeasible; for a feasible verdict, the witness's largest slack.
    pub min_worst_slack: f64,
    pub search_space: u64,
    /// Candidates enumerated in lexicographic order up to and including the
    /// witness, or all of them.
    pub candidates_evaluated: u64,
}

impl FeasibilityVerdict {
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            group: &'a str,
            best_value: f64,
            min_violation: f64,
            epsilon: f64,
            grid: String,
            feasible: bool,
            min_worst_slack: f64,
            search_space: u64,
            witness: String,
        }
        let grid = self.resolution.map_or_else(|| "binary".to_string(), |r| r.to_string());
        let witness = self.witness.as_ref().map_or_else(String::new, |w| {
            w.values().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        });
        let mut w = csv::Writer::from_writer(out);
        for g in &self.groups {
            w.serialize(Row {
                group: &g.group,
                best_value: g.best_value,
                min_violation: g.min_violation,
                epsilon: self.epsilon,
                grid: grid.clone(),
                feasible: self.feasible,
                min_worst_slack: self.min_worst_slack,
                search_space: self.search_space,
                witness: witness.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

struct GroupTarget {
    points: Vec<WeightedPoint>,
    best: f64,
}

struct PartitionOutcome {
    /// Rank within the partition and candidate values of the first feasible.
    feasible: Option<(u64, Vec<f64>)>,
    min_violation: Vec<f64>,
    min_worst_violation: f64,
    min_worst_slack: f64,
    evaluated: u64,
}

/// Exhaustive search for one predictor satisfying every group at slack
/// `epsilon`, over values in `grid_values(resolution)` (or `{0, 1}` when
/// `restrict_binary` is set or the loss only accepts binary predictors).
///
/// Candidates assign a grid value to each support point of `d`; points
/// outside the support get 0. Enumeration is lexicographic in support order
/// and the witness is the first feasible candidate in that order.
pub fn feasible_multipac(
    loss: &LossFunction,
    d: &Distribution,
    hypotheses: &HypothesisCollection,
    groups: &GroupCollection,
    epsilon: f64,
    resolution: f64,
    restrict_binary: bool,
) -> Result<FeasibilityVerdict, OracleError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("epsilon = {epsilon} must be non-negative")));
    }
    let binary = restrict_binary || loss.binary_only();
    let grid = if binary { vec![0.0, 1.0] } else { grid_values(resolution)? };
    let support = d.support_indices();
    let size = (grid.len() as f64).powi(support.len() as i32);
    if size > MAX_SEARCH_SPACE {
        return Err(OracleError::SearchSpaceTooLarge {
            size,
            limit: MAX_SEARCH_SPACE,
        });
    }
    let search_space = size.round() as u64;

    let mut names = Vec::new();
    let mut targets = Vec::new();
    for g in groups {
        if d.mass(&g.group) <= 0.0 {
            continue;
        }
        let d_g = d.restrict(&g.group)?;
        let best = best_in_class(loss, &d_g, hypotheses)?;
        names.push(g.name.clone());
        targets.push(GroupTarget {
            points: d_g.support(),
            best: best.value,
        });
    }

    let n = d.len();
    let first_feasible = AtomicUsize::new(usize::MAX);
    let per_partition = search_space / grid.len() as u64;
    let outcomes: Vec<PartitionOutcome> = (0..grid.len())
        .into_par_iter()
        .map(|part| {
            search_partition(
                loss,
                &targets,
                &grid,
                &support,
                n,
                part,
                epsilon,
                &first_feasible,
            )
        })
        .collect::<Result<_, OracleError>>()?;

    let mut min_violation = vec![f64::INFINITY; targets.len()];
    let mut min_worst_violation = f64::INFINITY;
    let mut min_worst_slack = f64::INFINITY;
    let mut evaluated = 0u64;
    let mut witness = None;
    for (part, outcome) in outcomes.into_iter().enumerate() {
        if let Some((rank, values)) = outcome.feasible {
            evaluated = part as u64 * per_partition + rank + 1;
            min_worst_slack = slack_of(loss, &targets, &values)?;
            witness = Some(Predictor::new(values)?);
            min_violation.iter_mut().for_each(|v| *v = 0.0);
            min_worst_violation = 0.0;
            break;
        }
        evaluated += outcome.evaluated;
        for (m, v) in min_violation.iter_mut().zip(&outcome.min_violation) {
            *m = m.min(*v);
        }
        min_worst_violation = min_worst_violation.min(outcome.min_worst_violation);
        min_worst_slack = min_worst_slack.min(outcome.min_worst_slack);
    }
    if support.is_empty() || targets.is_empty() {
        min_worst_violation = 0.0;
        min_worst_slack = min_worst_slack.min(0.0);
    }
    let feasible = witness.is_some();
    Ok(FeasibilityVerdict {
        feasible,
        witness,
        epsilon,
        resolution: if binary { None } else { Some(resolution) },
        groups: names
            .into_iter()
            .zip(&targets)
            .zip(min_violation)
            .map(|((group, t), v)| GroupViolation {
                group,
                best_value: t.best,
                min_violation: if v.is_finite() { v } else { 0.0 },
            })
            .collect(),
        min_worst_violation,
        min_worst_slack: if min_worst_slack.is_finite() { min_worst_slack } else { 0.0 },
        search_space,
        candidates_evaluated: evaluated,
    })
}

fn slack_of(loss: &LossFunction, targets: &[GroupTarget], values: &[f64]) -> Result<f64, OracleError> {
    let mut worst = f64::NEG_INFINITY;
    for t in targets {
        worst = worst.max(loss.evaluate_points(&t.points, |i| values[i])? - t.best);
    }
    Ok(if targets.is_empty() { 0.0 } else { worst })
}

#[allow(clippy::too_many_arguments)]
fn search_partition(
    loss: &LossFunction,
    targets: &[GroupTarget],
    grid: &[f64],
    support: &[usize],
    n: usize,
    part: usize,
    epsilon: f64,
    first_feasible: &AtomicUsize,
) -> Result<PartitionOutcome, OracleError> {
    let mut outcome = PartitionOutcome {
        feasible: None,
        min_violation: vec![f64::INFINITY; targets.len()],
        min_worst_violation: f64::INFINITY,
        min_worst_slack: f64::INFINITY,
        evaluated: 0,
    };
    let mut values = vec![0.0; n];
    if support.is_empty() {
        // A single candidate: the all-zero predictor, owned by partition 0.
        if part != 0 {
            return Ok(outcome);
        }
    } else {
        values[support[0]] = grid[part];
    }
    let rest = support.get(1..).unwrap_or(&[]);
    let mut digits = vec![0usize; rest.len()];
    for &x in rest {
        values[x] = grid[0];
    }
    let mut slacks = vec![0.0; targets.len()];
    loop {
        if outcome.evaluated.is_multiple_of(1024) && first_feasible.load(Ordering::Relaxed) < part {
            return Ok(outcome);
        }
        outcome.evaluated += 1;
        let mut worst_slack = f64::NEG_INFINITY;
        let mut worst_violation: f64 = 0.0;
        for (s, t) in slacks.iter_mut().zip(targets) {
            *s = loss.evaluate_points(&t.points, |i| values[i])? - t.best;
            worst_slack = worst_slack.max(*s);
            worst_violation = worst_violation.max((*s - epsilon).max(0.0));
        }
        if worst_violation <= 0.0 {
            first_feasible.fetch_min(part, Ordering::Relaxed);
            outcome.feasible = Some((outcome.evaluated - 1, values));
            return Ok(outcome);
        }
        for (m, s) in outcome.min_violation.iter_mut().zip(&slacks) {
            *m = m.min((s - epsilon).max(0.0));
        }
        outcome.min_worst_violation = outcome.min_worst_violation.min(worst_violation);
        outcome.min_worst_slack = outcome.min_worst_slack.min(worst_slack);

        // odometer, last support point fastest
        let mut pos = rest.len();
        loop {
            if pos == 0 {
                return Ok(outcome);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < grid.len() {
                values[rest[pos]] = grid[digits[pos]];
                break;
            }
            digits[pos] = 0;
            values[rest[pos]] = grid[0];
        }
    }
}

/// Minimum of `L_D` over grid predictors (values on support points, 0
/// elsewhere), with the first minimizer in lexicographic order.
pub fn grid_minimum(
    loss: &LossFunction,
    d: &Distribution,
    resolution: f64,
    restrict_binary: bool,
) -> Result<(Predictor, f64), OracleError> {
    let grid = if restrict_binary || loss.binary_only() {
        vec![0.0, 1.0]
    } else {
        grid_values(resolution)?
    };
    let support = d.support_indices();
    let size = (grid.len() as f64).powi(support.len() as i32);
    if size > MAX_SEARCH_SPACE {
        return Err(OracleError::SearchSpaceTooLarge {
            size,
            limit: MAX_SEARCH_SPACE,
        });
    }
    let points = d.support();
    let mut values = vec![0.0; d.len()];
    let mut digits = vec![0usize; support.len()];
    let mut best = (values.clone(), f64::INFINITY);
    loop {
        let value = loss.evaluate_points(&points, |i| values[i])?;
        if value < best.1 {
            best = (values.clone(), value);
        }
        let mut pos = support.len();
        loop {
            if pos == 0 {
                return Ok((Predictor::new(best.0)?, best.1));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < grid.len() {
                values[support[pos]] = grid[digits[pos]];
                break;
            }
            digits[pos] = 0;
            values[support[pos]] = grid[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::losses::{Metric, PointLoss};
    use crate::model::{Domain, Group, NamedGroup, NamedPredictor};

    fn fairness_accuracy(a: f64, b: f64) -> (LossFunction, Distribution, HypothesisCollection, GroupCollection) {
        let domain = Arc::new(Domain::new(vec!["x_S".into(), "x_T".into(), "x_ST".into()]).unwrap());
        let d = Distribution::new(domain, vec![0.8, 0.1, 0.1], vec![0.0, 1.0, 1.0]).unwrap();
        let metric = Arc::new(Metric::from_identical_pairs(3, &[(0, 2)]).unwrap());
        let loss = LossFunction::if_plus_decomposable(a, b, PointLoss::ZeroOne, metric).unwrap();
        let h = HypothesisCollection::new(vec![
            NamedPredictor {
                name: "h0".into(),
                predictor: Predictor::constant(3, 0.0).unwrap(),
            },
            NamedPredictor {
                name: "h1".into(),
                predictor: Predictor::constant(3, 1.0).unwrap(),
            },
        ])
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
    fn best_in_class_on_incompatible_instance() {
        let (loss, d, h, g) = fairness_accuracy(0.9, 0.1);
        let s = best_in_class(&loss, &d.restrict(&g.get(0).group).unwrap(), &h).unwrap();
        assert_eq!(s.name, "h0");
        assert!((s.value - 0.1 / 9.0).abs() < 1e-12);
        let t = best_in_class(&loss, &d.restrict(&g.get(1).group).unwrap(), &h).unwrap();
        assert_eq!(t.name, "h1");
        assert!(t.value.abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_first_hypothesis() {
        let domain = Arc::new(Domain::indexed(2).unwrap());
        let d = Distribution::new(domain, vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let h = HypothesisCollection::new(vec![
            NamedPredictor {
                name: "zero".into(),
                predictor: Predictor::constant(2, 0.0).unwrap(),
            },
            NamedPredictor {
                name: "one".into(),
                predictor: Predictor::constant(2, 1.0).unwrap(),
            },
        ])
        .unwrap();
        let best = best_in_class(&LossFunction::squared(), &d, &h).unwrap();
        assert_eq!((best.index, best.name.as_str()), (0, "zero"));
        assert!((best.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn verify_slack_of_constant_one_on_group_s() {
        let (loss, d, h, g) = fairness_accuracy(0.9, 0.1);
        let report = verify_multipac(&loss, &d, &h, &g, 0.07, &h.get(1).predictor).unwrap();
        // L_S(h1) = 8b/9, baseline b/9
        assert!((report.rows[0].loss - 0.8 / 9.0).abs() < 1e-12);
        assert!((report.rows[0].slack - 0.7 / 9.0).abs() < 1e-12);
        assert!(report.rows[1].slack.abs() < 1e-12);
        assert!(!report.pass);
        assert_eq!(report.violations().count(), 1);
    }

    // Independent enumeration of all binary predictors on the three-point
    // instance; the combined loss is written out by hand.
    fn worst_slack_by_hand(a: f64, b: f64, h: [f64; 3]) -> f64 {
        let ne = |u: f64, v: f64| if u != v { 1.0 } else { 0.0 };
        // S = {x_S: 8/9, x_ST: 1/9}, identical pair (x_S, x_ST), labels 0 / 1
        let s_if = 2.0 * (8.0 / 9.0) * (1.0 / 9.0) * ne(h[0], h[2]);
        let s_err = (8.0 / 9.0) * ne(h[0], 0.0) + (1.0 / 9.0) * ne(h[2], 1.0);
        let s = a * s_if + b * s_err - b / 9.0;
        // T = {x_T: 1/2, x_ST: 1/2}, no identical pairs, labels 1 / 1
        let t = b * (0.5 * ne(h[1], 1.0) + 0.5 * ne(h[2], 1.0));
        s.max(t)
    }

    #[test]
    fn binary_search_matches_hand_enumeration() {
        let (a, b) = (0.9, 0.1);
        let (loss, d, h, g) = fairness_accuracy(a, b);
        let mut threshold = f64::INFINITY;
        for bits in 0..8u32 {
            let c = [(bits >> 2) & 1, (bits >> 1) & 1, bits & 1].map(|v| v as f64);
            threshold = threshold.min(worst_slack_by_hand(a, b, c));
        }
        assert!((threshold - 0.05).abs() < 1e-12);
        let below = feasible_multipac(&loss, &d, &h, &g, 0.04, 0.5, true).unwrap();
        assert!(!below.feasible);
        assert_eq!(below.candidates_evaluated, 8);
        assert_eq!(below.search_space, 8);
        assert!((below.min_worst_slack - threshold).abs() < 1e-12);
        assert!((below.min_worst_violation - (threshold - 0.04)).abs() < 1e-12);
        assert!(below.groups.iter().all(|r| r.min_violation >= 0.0));

        let at = feasible_multipac(&loss, &d, &h, &g, 0.05 + 1e-12, 0.5, true).unwrap();
        assert!(at.feasible);
        assert_eq!(at.witness.as_ref().unwrap().values(), &[0.0, 1.0, 0.0]);

        let loose = feasible_multipac(&loss, &d, &h, &g, 0.6, 0.5, true).unwrap();
        assert!(loose.feasible);
        let w = loose.witness.unwrap();
        assert!(verify_multipac(&loss, &d, &h, &g, 0.6, &w).unwrap().pass);
        // all-zero predictor comes first in lexicographic order
        assert_eq!(loose.candidates_evaluated, 1);
    }

    #[test]
    fn single_group_feasible_at_zero_slack() {
        let domain = Arc::new(Domain::indexed(3).unwrap());
        let d = Distribution::new(domain, vec![0.2, 0.3, 0.5], vec![0.0, 0.5, 1.0]).unwrap();
        let h = HypothesisCollection::new(vec![NamedPredictor {
            name: "grid".into(),
            predictor: Predictor::new(vec![0.0, 0.5, 1.0]).unwrap(),
        }])
        .unwrap();
        let g = GroupCollection::new(vec![NamedGroup {
            name: "all".into(),
            group: Group::full(3),
        }])
        .unwrap();
        let v = feasible_multipac(&LossFunction::squared(), &d, &h, &g, 0.0, 0.25, false).unwrap();
        assert!(v.feasible);
        assert_eq!(v.search_space, 125);
        assert_eq!(v.resolution, Some(0.25));
    }

    #[test]
    fn refining_the_grid_keeps_feasibility() {
        let domain = Arc::new(Domain::indexed(3).unwrap());
        let d = Distribution::new(domain, vec![0.4, 0.3, 0.3], vec![0.1, 0.65, 0.9]).unwrap();
        let h = HypothesisCollection::new(vec![NamedPredictor {
            name: "bayes".into(),
            predictor: Predictor::new(vec![0.1, 0.65, 0.9]).unwrap(),
        }])
        .unwrap();
        let g = GroupCollection::new(vec![
            NamedGroup {
                name: "a".into(),
                group: Group::new(vec![0, 1], 3).unwrap(),
            },
            NamedGroup {
                name: "b".into(),
                group: Group::new(vec![1, 2], 3).unwrap(),
            },
        ])
        .unwrap();
        let loss = LossFunction::squared();
        for eps in [0.001, 0.005, 0.02, 0.05] {
            let mut r = 0.5;
            let mut was_feasible = false;
            while r >= 0.0625 {
                let v = feasible_multipac(&loss, &d, &h, &g, eps, r, false).unwrap();
                assert!(!(was_feasible && !v.feasible), "eps {eps} r {r}");
                was_feasible = v.feasible;
                r /= 2.0;
            }
        }
    }

    #[test]
    fn grid_minimum_of_incompatible_instance() {
        let (loss, d, _, _) = fairness_accuracy(0.9, 0.1);
        let (h, value) = grid_minimum(&loss, &d, 0.5, true).unwrap();
        // x_S and x_ST agree at 0; only x_ST is misclassified
        assert_eq!(h.values(), &[0.0, 1.0, 0.0]);
        assert!((value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn search_space_guard() {
        let n = 9;
        let domain = Arc::new(Domain::indexed(n).unwrap());
        let d = Distribution::new(domain, vec![1.0 / n as f64; n], vec![0.5; n]).unwrap();
        let h = HypothesisCollection::new(vec![NamedPredictor {
            name: "c".into(),
            predictor: Predictor::constant(n, 0.5).unwrap(),
        }])
        .unwrap();
        let g = GroupCollection::new(vec![NamedGroup {
            name: "all".into(),
            group: Group::full(n),
        }])
        .unwrap();
        let err = feasible_multipac(&LossFunction::squared(), &d, &h, &g, 0.1, 0.1, false).unwrap_err();
        assert!(matches!(err, OracleError::SearchSpaceTooLarge { .. }));
    }
}

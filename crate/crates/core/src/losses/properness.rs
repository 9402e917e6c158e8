//! Singleton minimizers: unambiguity checks and the pointwise transform
//! `f(x, z)` of an f-proper loss.

use std::sync::Arc;

use super::{LossError, LossFunction, PointLoss};
use crate::model::WeightedPoint;

/// Minimizers are those within this distance of the grid minimum.
const ARGMIN_TOLERANCE: f64 = 1e-9;
/// Finest supported grid resolution.
const MIN_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Unambiguity {
    pub unique: bool,
    pub argmin: Vec<f64>,
    pub min_loss: f64,
}

/// Grid `{0, 1/N, 2/N, .., 1}` with `N = round(1 / resolution)`.
///
/// Values are computed as `i / N`, so the grid for `resolution / 2` contains
/// the grid for `resolution` bit-for-bit.
pub fn grid_values(resolution: f64) -> Result<Vec<f64>, LossError> {
    if !(MIN_RESOLUTION..=1.0).contains(&resolution) {
        return Err(LossError::InvalidParameter(format!(
            "grid resolution {resolution} must lie in [1e-4, 1]"
        )));
    }
    let steps = (1.0 / resolution).round().max(1.0) as usize;
    Ok((0..=steps).map(|i| i as f64 / steps as f64).collect())
}

fn singleton_loss(loss: &LossFunction, x: usize, z: f64, v: f64) -> Result<f64, LossError> {
    let point = [WeightedPoint {
        index: x,
        mass: 1.0,
        label_prob: z,
    }];
    loss.evaluate_points(&point, |_| v)
}

fn check_z(z: f64) -> Result<(), LossError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(LossError::InvalidParameter(format!("E[y|x] = {z} outside [0, 1]")));
    }
    Ok(())
}

/// Minimize `L` on the singleton distribution at `x` with `Pr[y = 1] = z`
/// over the candidate grid (`{0, 1}` for binary-only losses).
///
/// The minimizer is unique when every grid minimizer lies within `2r` of
/// every other (adjacent ties straddle a continuous optimum); for binary
/// candidates it is unique only when exactly one candidate attains the
/// minimum.
pub fn check_unambiguity(loss: &LossFunction, x: usize, z: f64, resolution: f64) -> Result<Unambiguity, LossError> {
    check_z(z)?;
    let binary = loss.binary_only();
    let candidates = if binary {
        vec![0.0, 1.0]
    } else {
        grid_values(resolution)?
    };
    let values = candidates
        .iter()
        .map(|&v| singleton_loss(loss, x, z, v))
        .collect::<Result<Vec<_>, _>>()?;
    let min_loss = values.iter().copied().fold(f64::INFINITY, f64::min);
    let argmin: Vec<f64> = candidates
        .iter()
        .zip(&values)
        .filter(|(_, &l)| l <= min_loss + ARGMIN_TOLERANCE)
        .map(|(&v, _)| v)
        .collect();
    let unique = if binary {
        argmin.len() == 1
    } else {
        let lo = argmin.first().copied().unwrap_or(0.0);
        let hi = argmin.last().copied().unwrap_or(0.0);
        hi - lo <= 2.0 * resolution + 1e-12
    };
    Ok(Unambiguity {
        unique,
        argmin,
        min_loss,
    })
}

/// `f(x, z)`: the prediction minimizing `L` on the singleton `D_{x,z}`.
///
/// The grid minimizer is refined by a local search at resolution `r / 16`
/// over the bracket of grid minimizers widened by `r` on both sides.
pub fn derive_f(loss: &LossFunction, x: usize, z: f64, resolution: f64) -> Result<f64, LossError> {
    let check = check_unambiguity(loss, x, z, resolution)?;
    if !check.unique {
        return Err(LossError::Ambiguous { point: x, z });
    }
    if loss.binary_only() {
        return Ok(check.argmin[0]);
    }
    let lo = (check.argmin[0] - resolution).max(0.0);
    let hi = (check.argmin[check.argmin.len() - 1] + resolution).min(1.0);
    let step = resolution / 16.0;
    let steps = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, lo);
    for j in 0..=steps {
        let v = (lo + j as f64 * step).min(1.0);
        let l = singleton_loss(loss, x, z, v)?;
        if l < best.0 {
            best = (l, v);
        }
    }
    Ok(best.1.clamp(0.0, 1.0))
}

/// Loss-level unambiguity: every listed `z` at every listed point has a
/// unique singleton minimizer.
pub fn is_unambiguous(
    loss: &LossFunction,
    points: &[usize],
    zs: &[f64],
    resolution: f64,
) -> Result<bool, LossError> {
    for &x in points {
        for &z in zs {
            if !check_unambiguity(loss, x, z, resolution)?.unique {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The map `(x, E[y|x]) -> prediction` of an f-proper loss.
#[derive(Debug, Clone, PartialEq)]
pub enum FProperTransform {
    /// `f(x, z) = z`: squared loss and binned calibration.
    Identity,
    /// `f(x, z) = 1[z >= 1/2]`: expected 0-1 loss.
    Threshold,
    /// Grid-derived singleton minimizer of an arbitrary loss.
    Derived { loss: Arc<LossFunction>, resolution: f64 },
}

impl FProperTransform {
    /// Closed form for the losses that have one.
    pub fn closed_form(loss: &LossFunction) -> Option<Self> {
        match loss {
            LossFunction::Decomposable(PointLoss::Squared) | LossFunction::Calibration { .. } => {
                Some(FProperTransform::Identity)
            }
            LossFunction::Decomposable(PointLoss::ZeroOne) => Some(FProperTransform::Threshold),
            _ => None,
        }
    }

    pub fn derived(loss: Arc<LossFunction>, resolution: f64) -> Result<Self, LossError> {
        grid_values(resolution)?;
        Ok(FProperTransform::Derived { loss, resolution })
    }

    pub fn resolution(&self) -> Option<f64> {
        match self {
            FProperTransform::Derived { resolution, .. } => Some(*resolution),
            _ => None,
        }
    }

    pub fn apply(&self, x: usize, z: f64) -> Result<f64, LossError> {
        check_z(z)?;
        match self {
            FProperTransform::Identity => Ok(z),
            FProperTransform::Threshold => Ok(if z >= 0.5 { 1.0 } else { 0.0 }),
            FProperTransform::Derived { loss, resolution } => derive_f(loss, x, z, *resolution),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FProperTransform::Identity => "identity".into(),
            FProperTransform::Threshold => "threshold".into(),
            FProperTransform::Derived { resolution, .. } => format!("derived(r={resolution})"),
        }
    }
}

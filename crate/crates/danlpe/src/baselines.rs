//! Black-box shift estimation from confusion statistics.
//!
//! Given the joint distribution of (label, prediction) on the source and
//! the prediction histogram on the target, the importance weights
//! `w = beta / alpha` solve the linear system `C w = q` with
//! `C[j][i] = P(y = i, prediction = j)`. Multiplying the weights back
//! into the source prior recovers the target proportions. Negative
//! weight estimates are artifacts of finite samples and get clipped to
//! zero before renormalization.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{JointConfusion, SimplexVector};
use crate::error::{Error, Result};
use crate::lpe::DEFAULT_CONDITION_CAP;

/// Output of [`bbse_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct BbseResult {
    /// Estimated target proportions, clipped and renormalized.
    pub beta_hat: SimplexVector,
    /// Importance weights as solved, before any clipping.
    pub raw_weights: Vec<f64>,
    /// True when at least one raw weight was negative.
    pub clipped: bool,
}

/// Estimates target label proportions by inverting the joint confusion.
pub fn bbse_estimate(
    joint: &JointConfusion,
    q_hat: &SimplexVector,
    source_prior: &SimplexVector,
) -> Result<BbseResult> {
    bbse_estimate_with_cap(joint, q_hat, source_prior, DEFAULT_CONDITION_CAP)
}

pub fn bbse_estimate_with_cap(
    joint: &JointConfusion,
    q_hat: &SimplexVector,
    source_prior: &SimplexVector,
    condition_cap: f64,
) -> Result<BbseResult> {
    let classes = joint.classes();
    if q_hat.len() != classes || source_prior.len() != classes {
        return Err(Error::DimensionMismatch(format!(
            "joint is {classes}x{classes}, histogram has {}, prior has {}",
            q_hat.len(),
            source_prior.len()
        )));
    }

    // Row j of the system is prediction outcome j.
    let c = DMatrix::from_fn(classes, classes, |j, i| joint.get(i, j));
    let inverse = c
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { cond: f64::INFINITY, cap: condition_cap })?;
    let cond = c.norm() * inverse.norm();
    if !cond.is_finite() || cond > condition_cap {
        return Err(Error::IllConditioned { cond, cap: condition_cap });
    }
    let q = DVector::from_iterator(classes, q_hat.iter().cloned());
    let weights = c
        .lu()
        .solve(&q)
        .ok_or(Error::IllConditioned { cond: f64::INFINITY, cap: condition_cap })?;

    let raw_weights: Vec<f64> = weights.iter().cloned().collect();
    let clipped = raw_weights.iter().any(|&w| w < 0.0);
    let unnormalized: Vec<f64> = raw_weights
        .iter()
        .zip(source_prior.iter())
        .map(|(&w, &a)| w.max(0.0) * a)
        .collect();
    let total: f64 = unnormalized.iter().sum();
    if total <= 0.0 {
        // Every weight clipped away; there is no distribution to report.
        return Err(Error::DegenerateSimplex);
    }
    let beta_hat = SimplexVector::new(unnormalized.iter().map(|v| v / total).collect())?;
    Ok(BbseResult { beta_hat, raw_weights, clipped })
}

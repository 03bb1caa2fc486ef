//! Label proportion estimation by moment matching.
//!
//! Let `P[i][j] = P(prediction = j | y = i)` on the source and `q[j]` the
//! histogram of predictions on the target. If the class conditionals are
//! shared across domains, the target proportions `gamma` satisfy
//! `sum_i gamma[i] * P[i][j] = q[j]` for every `j`. The estimator
//! minimizes the squared residual of that system,
//!
//! ```text
//! J(gamma) = sum_j (sum_i gamma[i] * P[i][j] - q[j])^2
//! ```
//!
//! by projected gradient descent on the simplex. The projection direction
//! removes the gradient's mean so coordinate sums are preserved, and a
//! floor clamp keeps every coordinate at least [`GAMMA_FLOOR`] by shifting
//! the deficit onto the largest coordinate. `J` is convex (its Hessian is
//! `2 * Pbar^T * Pbar` with `Pbar[j][i] = P[i][j]`), so for small enough
//! step sizes the iteration settles at the constrained minimizer.
//!
//! [`solve_exact`] solves the moment system directly instead; when the
//! confusion matrix is invertible and the exact solution is interior to
//! the simplex, the iterative path converges to it.

use nalgebra::DMatrix;
use nalgebra::DVector;

use crate::distributions::{RowConditional, SimplexVector, GAMMA_FLOOR, RENORMALIZE_TOLERANCE};
use crate::error::{Error, Result};

/// Condition-number estimates above this are treated as singular by
/// [`solve_exact`] unless a different cap is given.
pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

/// Step-size and inner-iteration budget for one estimation round.
#[derive(Debug, Clone, PartialEq)]
pub struct LpeConfig {
    /// Gradient step size.
    pub lambda_l: f64,
    /// Projected gradient steps per call to [`run_lpe_updates`].
    pub steps: usize,
    /// Coordinate floor enforced after every step.
    pub floor: f64,
}

impl LpeConfig {
    pub fn new(lambda_l: f64, steps: usize) -> Result<Self> {
        Self::with_floor(lambda_l, steps, GAMMA_FLOOR)
    }

    pub fn with_floor(lambda_l: f64, steps: usize, floor: f64) -> Result<Self> {
        if !lambda_l.is_finite() || lambda_l <= 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "lambda_l must be positive and finite, got {lambda_l}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidHyperParams("steps must be at least 1".into()));
        }
        if !floor.is_finite() || floor <= 0.0 || floor >= 1.0 {
            return Err(Error::InvalidHyperParams(format!(
                "floor must lie in (0, 1), got {floor}"
            )));
        }
        Ok(Self { lambda_l, steps, floor })
    }
}

/// Current estimate plus bookkeeping carried across estimation rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpeState {
    pub gamma: SimplexVector,
    /// Total projected gradient steps taken so far.
    pub step_count: u64,
    /// Loss after the most recent round; infinity before the first.
    pub last_loss: f64,
}

impl LpeState {
    /// Starts from the uniform distribution.
    pub fn uniform(classes: usize) -> Self {
        Self::with_gamma(SimplexVector::uniform(classes))
    }

    pub fn with_gamma(gamma: SimplexVector) -> Self {
        Self { gamma, step_count: 0, last_loss: f64::INFINITY }
    }
}

fn check_dims(gamma_len: usize, p_cond: &RowConditional, q_hat: &SimplexVector) -> Result<()> {
    let classes = p_cond.classes();
    if gamma_len != classes || q_hat.len() != classes {
        return Err(Error::DimensionMismatch(format!(
            "gamma has {gamma_len} entries, conditional is {classes}x{classes}, \
             histogram has {}",
            q_hat.len()
        )));
    }
    Ok(())
}

/// Squared moment-matching residual of `gamma` against the prediction
/// histogram `q_hat`.
pub fn lpe_loss(
    gamma: &SimplexVector,
    p_cond: &RowConditional,
    q_hat: &SimplexVector,
) -> Result<f64> {
    check_dims(gamma.len(), p_cond, q_hat)?;
    let classes = p_cond.classes();
    let mut loss = 0.0;
    for j in 0..classes {
        let mixed: f64 = (0..classes).map(|i| gamma.get(i) * p_cond.get(i, j)).sum();
        let residual = mixed - q_hat.get(j);
        loss += residual * residual;
    }
    Ok(loss)
}

/// Gradient of [`lpe_loss`] with respect to `gamma`:
/// `d/d gamma[k] = 2 * sum_j P[k][j] * (sum_i gamma[i] * P[i][j] - q[j])`.
pub fn lpe_gradient(
    gamma: &SimplexVector,
    p_cond: &RowConditional,
    q_hat: &SimplexVector,
) -> Result<Vec<f64>> {
    check_dims(gamma.len(), p_cond, q_hat)?;
    let classes = p_cond.classes();
    let residuals: Vec<f64> = (0..classes)
        .map(|j| {
            let mixed: f64 = (0..classes).map(|i| gamma.get(i) * p_cond.get(i, j)).sum();
            mixed - q_hat.get(j)
        })
        .collect();
    let grad = (0..classes)
        .map(|k| 2.0 * (0..classes).map(|j| p_cond.get(k, j) * residuals[j]).sum::<f64>())
        .collect();
    Ok(grad)
}

/// One gradient step with the component along the all-ones direction
/// removed, so the coordinate sum of the result equals the coordinate sum
/// of `gamma`. The result may leave `[0, 1]` and is not yet clamped.
pub fn projected_step(
    gamma: &SimplexVector,
    gradient: &[f64],
    lambda_l: f64,
) -> Result<Vec<f64>> {
    if gradient.len() != gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries for {} classes",
            gradient.len(),
            gamma.len()
        )));
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    if !lambda_l.is_finite() {
        return Err(Error::NonFinite("step size"));
    }
    let mean = gradient.iter().sum::<f64>() / gradient.len() as f64;
    Ok(gamma
        .iter()
        .zip(gradient)
        .map(|(&g, &d)| g - lambda_l * (d - mean))
        .collect())
}

/// Index of the largest entry, ties resolved toward the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Raises every entry below `floor` up to it, taking the deficit from the
/// currently largest entry, so the coordinate sum is preserved exactly.
///
/// Fails with `degenerate simplex` when no valid vector can come out:
/// `classes * floor > 1`, or covering some deficit would push the largest
/// entry itself below the floor.
pub fn clamp_floor(candidate: &[f64], floor: f64) -> Result<SimplexVector> {
    if candidate.is_empty() {
        return Err(Error::NotASimplex { sum: 0.0 });
    }
    if !floor.is_finite() || floor <= 0.0 {
        return Err(Error::InvalidHyperParams(format!(
            "floor must be positive and finite, got {floor}"
        )));
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clamp candidate"));
    }
    let classes = candidate.len();
    if classes as f64 * floor > 1.0 + RENORMALIZE_TOLERANCE {
        return Err(Error::DegenerateSimplex);
    }
    let sum: f64 = candidate.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        return Err(Error::NotASimplex { sum });
    }

    let mut out = candidate.to_vec();
    // Each pass fixes one coordinate for good, so `classes` passes suffice;
    // more than that means the transfers are cycling and the input has no
    // valid clamp.
    let mut passes = 0;
    while let Some(i) = out.iter().position(|&v| v < floor) {
        passes += 1;
        if passes > classes {
            return Err(Error::DegenerateSimplex);
        }
        let k = argmax(&out);
        if k == i {
            // The largest entry is itself below the floor.
            return Err(Error::DegenerateSimplex);
        }
        let moved = out[k] + out[i] - floor;
        if moved < floor {
            return Err(Error::DegenerateSimplex);
        }
        out[k] = moved;
        out[i] = floor;
    }
    SimplexVector::new(out)
}

/// Runs `config.steps` projected gradient steps from `state` and returns
/// the advanced state with the loss at the new estimate.
pub fn run_lpe_updates(
    state: &LpeState,
    config: &LpeConfig,
    p_cond: &RowConditional,
    q_hat: &SimplexVector,
) -> Result<LpeState> {
    check_dims(state.gamma.len(), p_cond, q_hat)?;
    let mut gamma = state.gamma.clone();
    for _ in 0..config.steps {
        let grad = lpe_gradient(&gamma, p_cond, q_hat)?;
        let candidate = projected_step(&gamma, &grad, config.lambda_l)?;
        gamma = clamp_floor(&candidate, config.floor)?;
    }
    let last_loss = lpe_loss(&gamma, p_cond, q_hat)?;
    Ok(LpeState {
        gamma,
        step_count: state.step_count + config.steps as u64,
        last_loss,
    })
}

/// Iterates [`run_lpe_updates`] until the estimate moves less than `tol`
/// in L2, or `max_rounds` rounds have run. Used for standalone estimation
/// where no training loop paces the updates.
pub fn run_to_convergence(
    state: &LpeState,
    config: &LpeConfig,
    p_cond: &RowConditional,
    q_hat: &SimplexVector,
    tol: f64,
    max_rounds: usize,
) -> Result<LpeState> {
    let mut current = state.clone();
    for _ in 0..max_rounds {
        let next = run_lpe_updates(&current, config, p_cond, q_hat)?;
        let moved: f64 = next
            .gamma
            .iter()
            .zip(current.gamma.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        current = next;
        if moved < tol {
            break;
        }
    }
    Ok(current)
}

/// Solves the moment system `Pbar * gamma = q_hat` exactly, where
/// `Pbar[j][i] = P(prediction = j | y = i)`.
///
/// The solution is reported as-is: it is only a probability vector when
/// the true proportions are recoverable, and callers that need a simplex
/// point should clamp it. Singular or badly conditioned systems are
/// rejected with the condition estimate in the error.
pub fn solve_exact(p_cond: &RowConditional, q_hat: &SimplexVector) -> Result<Vec<f64>> {
    solve_exact_with_cap(p_cond, q_hat, DEFAULT_CONDITION_CAP)
}

pub fn solve_exact_with_cap(
    p_cond: &RowConditional,
    q_hat: &SimplexVector,
    condition_cap: f64,
) -> Result<Vec<f64>> {
    check_dims(p_cond.classes(), p_cond, q_hat)?;
    let classes = p_cond.classes();
    // Transpose: row j of the system is moment j.
    let pbar = DMatrix::from_fn(classes, classes, |j, i| p_cond.get(i, j));
    let inverse = pbar
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { cond: f64::INFINITY, cap: condition_cap })?;
    let cond = pbar.norm() * inverse.norm();
    if !cond.is_finite() || cond > condition_cap {
        return Err(Error::IllConditioned { cond, cap: condition_cap });
    }
    let q = DVector::from_iterator(classes, q_hat.iter().cloned());
    let solution = pbar
        .lu()
        .solve(&q)
        .ok_or(Error::IllConditioned { cond: f64::INFINITY, cap: condition_cap })?;
    Ok(solution.iter().cloned().collect())
}

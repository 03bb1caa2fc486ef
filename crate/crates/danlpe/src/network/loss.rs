//! Softmax cross-entropy losses for the two heads.
//!
//! The domain loss supports importance reweighting of the source half:
//! each source sample is weighted by `gamma[y] / alpha_tilde[y]`
//! normalized by the batch mean weight, which keeps the loss scale
//! comparable to the unweighted case and reduces to it exactly when
//! `gamma == alpha_tilde`.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::distributions::SimplexVector;
use crate::error::{Error, Result};

/// Per-sample importance weights for the source half of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchWeights {
    /// `gamma[y_i] / alpha_tilde[y_i]` per sample.
    pub weights: Vec<f64>,
    /// Batch mean of `weights`; the normalizer applied in the loss.
    pub norm: f64,
}

impl BatchWeights {
    pub fn from_labels(
        labels: &[usize],
        gamma: &SimplexVector,
        alpha_tilde: &SimplexVector,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        if gamma.len() != alpha_tilde.len() {
            return Err(Error::DimensionMismatch(format!(
                "gamma has {} classes, prior has {}",
                gamma.len(),
                alpha_tilde.len()
            )));
        }
        gamma.require_positive("gamma")?;
        alpha_tilde.require_positive("source prior")?;
        let classes = gamma.len();
        let mut weights = Vec::with_capacity(labels.len());
        for &y in labels {
            if y >= classes {
                return Err(Error::ClassOutOfRange { index: y, classes });
            }
            weights.push(gamma.get(y) / alpha_tilde.get(y));
        }
        let norm = weights.iter().sum::<f64>() / weights.len() as f64;
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::NonFinite("batch weight normalizer"));
        }
        Ok(BatchWeights { weights, norm })
    }
}

fn log_softmax_row(row: ArrayView1<f64>) -> (f64, Vec<f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= total;
    }
    let lse = max + total.ln();
    (lse, exps)
}

fn check_class_inputs(
    logits: &ArrayView2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<()> {
    if logits.nrows() == 0 {
        return Err(Error::EmptySampleSet);
    }
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let classes = logits.ncols();
    for &y in labels {
        if y >= classes {
            return Err(Error::ClassOutOfRange { index: y, classes });
        }
    }
    if let Some(w) = class_weights {
        if w.len() != classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class weights for {classes} classes",
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::NonFinite("class weights"));
        }
    }
    Ok(())
}

/// Weighted mean softmax cross-entropy. With `class_weights` the per-class
/// weights are applied per sample and the total is divided by the sum of
/// applied weights, so uniform weights reproduce the plain mean.
pub fn class_loss(
    logits: ArrayView2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<f64> {
    let (loss, _) = class_loss_grad(logits, labels, class_weights)?;
    Ok(loss)
}

/// [`class_loss`] plus its gradient with respect to the logits.
pub fn class_loss_grad(
    logits: ArrayView2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    check_class_inputs(&logits, labels, class_weights)?;
    let n = logits.nrows();
    let classes = logits.ncols();

    let sample_weight =
        |y: usize| class_weights.map(|w| w[y]).unwrap_or(1.0);
    let weight_total: f64 = labels.iter().map(|&y| sample_weight(y)).sum();

    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, classes));
    for (i, row) in logits.rows().into_iter().enumerate() {
        let (lse, softmax) = log_softmax_row(row);
        let y = labels[i];
        let w = sample_weight(y) / weight_total;
        loss += w * (lse - row[y]);
        for j in 0..classes {
            let indicator = if j == y { 1.0 } else { 0.0 };
            grad[[i, j]] = w * (softmax[j] - indicator);
        }
    }
    if !loss.is_finite() {
        return Err(Error::Diverged { what: "class loss", iteration: 0 });
    }
    Ok((loss, grad))
}

fn check_domain_inputs(
    source_logits: &ArrayView2<f64>,
    source_labels: &[usize],
    target_logits: &ArrayView2<f64>,
) -> Result<()> {
    if source_logits.nrows() == 0 {
        return Err(Error::EmptySampleSet);
    }
    if source_logits.nrows() != target_logits.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "domain halves differ: {} source rows vs {} target rows",
            source_logits.nrows(),
            target_logits.nrows()
        )));
    }
    if source_logits.ncols() != 2 || target_logits.ncols() != 2 {
        return Err(Error::DimensionMismatch("domain logits must have 2 columns".into()));
    }
    if source_labels.len() != source_logits.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} source labels for {} source rows",
            source_labels.len(),
            source_logits.nrows()
        )));
    }
    Ok(())
}

/// Importance-reweighted domain discrimination loss.
///
/// Source samples carry domain label 0 and weight `w_i / mean(w)` with
/// `w_i = gamma[y_i] / alpha_tilde[y_i]`; target samples carry domain
/// label 1, unweighted. The total is divided by the half-batch size.
pub fn domain_loss_reweighted(
    source_logits: ArrayView2<f64>,
    source_labels: &[usize],
    target_logits: ArrayView2<f64>,
    gamma: &SimplexVector,
    alpha_tilde: &SimplexVector,
) -> Result<f64> {
    let (loss, _, _) = domain_loss_reweighted_grad(
        source_logits,
        source_labels,
        target_logits,
        gamma,
        alpha_tilde,
    )?;
    Ok(loss)
}

/// [`domain_loss_reweighted`] plus gradients for both logit halves.
pub fn domain_loss_reweighted_grad(
    source_logits: ArrayView2<f64>,
    source_labels: &[usize],
    target_logits: ArrayView2<f64>,
    gamma: &SimplexVector,
    alpha_tilde: &SimplexVector,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_domain_inputs(&source_logits, source_labels, &target_logits)?;
    let weights = BatchWeights::from_labels(source_labels, gamma, alpha_tilde)?;
    let half = source_logits.nrows() as f64;

    let mut loss = 0.0;
    let mut d_source = Array2::zeros((source_logits.nrows(), 2));
    for (i, row) in source_logits.rows().into_iter().enumerate() {
        let (lse, softmax) = log_softmax_row(row);
        let scale = weights.weights[i] / weights.norm;
        loss += scale * (lse - row[0]);
        d_source[[i, 0]] = scale * (softmax[0] - 1.0) / half;
        d_source[[i, 1]] = scale * softmax[1] / half;
    }
    let mut d_target = Array2::zeros((target_logits.nrows(), 2));
    for (i, row) in target_logits.rows().into_iter().enumerate() {
        let (lse, softmax) = log_softmax_row(row);
        loss += lse - row[1];
        d_target[[i, 0]] = softmax[0] / half;
        d_target[[i, 1]] = (softmax[1] - 1.0) / half;
    }
    loss /= half;
    if !loss.is_finite() {
        return Err(Error::Diverged { what: "domain loss", iteration: 0 });
    }
    Ok((loss, d_source, d_target))
}

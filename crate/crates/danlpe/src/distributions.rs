//! Probability vectors and plug-in confusion estimates.
//!
//! Everything downstream (the proportion estimator, the reweighted domain
//! loss, the black-box baseline) consumes the three types defined here, so
//! their invariants are enforced at construction and re-checked when the
//! types are deserialized.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute drift accepted on sums that must equal one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Sums off by more than [`SUM_TOLERANCE`] but at most this much are
/// silently renormalized; anything worse is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Negative entries no larger in magnitude than this are rounding noise
/// and get clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Lower bound kept on every coordinate of a proportion estimate.
pub const GAMMA_FLOOR: f64 = 1e-3;

/// A point on the probability simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector {
    probs: Vec<f64>,
}

impl SimplexVector {
    /// Validates and wraps `probs`.
    ///
    /// Entries in `[-1e-12, 0)` are clamped to zero; more negative entries
    /// and non-finite entries are rejected. A sum within [`SUM_TOLERANCE`]
    /// of one is accepted as-is, a sum within [`RENORMALIZE_TOLERANCE`] is
    /// renormalized, anything else is an error.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut probs = probs;
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite("probability vector"));
            }
            if *p < 0.0 {
                if *p < -NEGATIVE_TOLERANCE {
                    return Err(Error::NegativeEntry { index: i, value: *p });
                }
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                return Err(Error::NotASimplex { sum });
            }
            for p in &mut probs {
                *p /= sum;
            }
        }
        Ok(Self { probs })
    }

    /// The uniform distribution over `classes` outcomes.
    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0, "uniform distribution needs at least one class");
        Self { probs: vec![1.0 / classes as f64; classes] }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.probs.iter()
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Errors with the offending class if any entry sits below `floor`.
    pub fn require_floor(&self, floor: f64) -> Result<()> {
        // Direct comparison would reject entries the clamp itself produced,
        // so allow one ulp-scale slack below the floor.
        let slack = floor * 1e-12;
        for (i, &p) in self.probs.iter().enumerate() {
            if p < floor - slack {
                return Err(Error::ZeroEntry { class: i, vector: "gamma" });
            }
        }
        Ok(())
    }

    /// Errors with the offending class if any entry is exactly zero.
    pub fn require_positive(&self, name: &'static str) -> Result<()> {
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(Error::ZeroEntry { class: i, vector: name });
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(v: SimplexVector) -> Vec<f64> {
        v.probs
    }
}

/// Plug-in estimate of the joint distribution of (true label, prediction).
///
/// `cells[[i, j]]` estimates `P(y = i, prediction = j)`; all cells sum to
/// one. `count` records how many samples backed the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct JointConfusion {
    cells: Array2<f64>,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    cells: Array2<f64>,
    count: usize,
}

impl JointConfusion {
    pub fn new(cells: Array2<f64>, count: usize) -> Result<Self> {
        let (rows, cols) = cells.dim();
        if rows != cols || rows == 0 {
            return Err(Error::DimensionMismatch(format!(
                "joint confusion must be square and non-empty, got {rows}x{cols}"
            )));
        }
        let mut cells = cells;
        for (idx, c) in cells.iter_mut().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite("joint confusion"));
            }
            if *c < 0.0 {
                if *c < -NEGATIVE_TOLERANCE {
                    return Err(Error::NegativeEntry { index: idx, value: *c });
                }
                *c = 0.0;
            }
        }
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                return Err(Error::NotASimplex { sum });
            }
            cells.mapv_inplace(|c| c / sum);
        }
        Ok(Self { cells, count })
    }

    pub fn classes(&self) -> usize {
        self.cells.nrows()
    }

    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, label: usize, pred: usize) -> f64 {
        self.cells[[label, pred]]
    }

    /// Marginal over predictions: the empirical prior of the true labels.
    pub fn label_marginal(&self) -> SimplexVector {
        let probs = self.cells.rows().into_iter().map(|r| r.sum()).collect();
        SimplexVector::new(probs).expect("row sums of a joint distribution form a simplex")
    }
}

impl TryFrom<RawJoint> for JointConfusion {
    type Error = Error;

    fn try_from(raw: RawJoint) -> Result<Self> {
        Self::new(raw.cells, raw.count)
    }
}

impl From<JointConfusion> for RawJoint {
    fn from(j: JointConfusion) -> RawJoint {
        RawJoint { cells: j.cells, count: j.count }
    }
}

/// Row-normalized confusion: `rows[[i, j]]` estimates
/// `P(prediction = j | y = i)`, so every row is a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConditional", into = "RawConditional")]
pub struct RowConditional {
    rows: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawConditional {
    rows: Array2<f64>,
}

impl RowConditional {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        let (r, c) = rows.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "row conditional must be square and non-empty, got {r}x{c}"
            )));
        }
        let mut rows = rows;
        for (idx, v) in rows.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("row conditional"));
            }
            if *v < 0.0 {
                if *v < -NEGATIVE_TOLERANCE {
                    return Err(Error::NegativeEntry { index: idx, value: *v });
                }
                *v = 0.0;
            }
        }
        for mut row in rows.rows_mut() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                    return Err(Error::NotASimplex { sum });
                }
                row.mapv_inplace(|v| v / sum);
            }
        }
        Ok(Self { rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.nrows()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn get(&self, label: usize, pred: usize) -> f64 {
        self.rows[[label, pred]]
    }
}

impl TryFrom<RawConditional> for RowConditional {
    type Error = Error;

    fn try_from(raw: RawConditional) -> Result<Self> {
        Self::new(raw.rows)
    }
}

impl From<RowConditional> for RawConditional {
    fn from(c: RowConditional) -> RawConditional {
        RawConditional { rows: c.rows }
    }
}

fn check_class_range(values: &[usize], classes: usize) -> Result<()> {
    for &v in values {
        if v >= classes {
            return Err(Error::ClassOutOfRange { index: v, classes });
        }
    }
    Ok(())
}

/// Counts (label, prediction) pairs into a joint confusion estimate.
pub fn estimate_joint_confusion(
    labels: &[usize],
    predictions: &[usize],
    classes: usize,
) -> Result<JointConfusion> {
    if labels.is_empty() || predictions.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if labels.len() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    check_class_range(labels, classes)?;
    check_class_range(predictions, classes)?;

    let mut counts = Array2::<f64>::zeros((classes, classes));
    for (&y, &p) in labels.iter().zip(predictions) {
        counts[[y, p]] += 1.0;
    }
    let n = labels.len() as f64;
    counts.mapv_inplace(|c| c / n);
    JointConfusion::new(counts, labels.len())
}

/// Divides each row of the joint by its marginal, producing
/// `P(prediction | label)`. A class with zero marginal has no conditional.
pub fn row_normalize(joint: &JointConfusion) -> Result<RowConditional> {
    let mut rows = joint.cells().clone();
    for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
        let marginal: f64 = row.sum();
        if marginal <= 0.0 {
            return Err(Error::ClassAbsent { class: i });
        }
        row.mapv_inplace(|v| v / marginal);
    }
    RowConditional::new(rows)
}

/// Histogram of predicted classes as a probability vector.
pub fn prediction_histogram(predictions: &[usize], classes: usize) -> Result<SimplexVector> {
    if predictions.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    check_class_range(predictions, classes)?;
    let mut counts = vec![0.0; classes];
    for &p in predictions {
        counts[p] += 1.0;
    }
    let n = predictions.len() as f64;
    for c in &mut counts {
        *c /= n;
    }
    SimplexVector::new(counts)
}

/// Empirical class prior of a labeled sample. Histogram over labels.
pub fn empirical_prior(labels: &[usize], classes: usize) -> Result<SimplexVector> {
    prediction_histogram(labels, classes)
}

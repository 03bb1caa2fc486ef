//! Metrics and experiment reporting.
//!
//! A run produces one [`RunOutcome`] per (method, seed); [`build_report`]
//! folds those into per-method aggregates. Distances to the true target
//! prior are only available when that prior is known (synthetic tasks,
//! or file tasks whose target records carry held-out labels).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distributions::{estimate_joint_confusion, SimplexVector};
use crate::error::{Error, Result};

/// The experiment arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Source-only classifier, no domain branch.
    Dnn,
    /// Domain-adversarial training with the unweighted domain loss.
    Dann,
    /// Alternating adversarial training and proportion estimation.
    DanLpe,
    /// Black-box shift estimation on top of the trained classifier.
    Bbse,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dnn, Method::Dann, Method::DanLpe, Method::Bbse];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dnn => "dnn",
            Method::Dann => "dann",
            Method::DanLpe => "dan_lpe",
            Method::Bbse => "bbse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "dnn" => Ok(Method::Dnn),
            "dann" => Ok(Method::Dann),
            "dan_lpe" => Ok(Method::DanLpe),
            "bbse" => Ok(Method::Bbse),
            other => Err(Error::InvalidConfig(format!(
                "unknown method \"{other}\" (expected dnn, dann, dan_lpe, or bbse)"
            ))),
        }
    }
}

/// Fraction of predictions matching the labels.
pub fn accuracy(labels: &[usize], preds: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let hits = labels.iter().zip(preds).filter(|(l, p)| l == p).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Unweighted mean over classes of the per-class F1 score. A class with
/// no true or predicted members contributes zero, the usual convention
/// for 0/0.
pub fn macro_f1(labels: &[usize], preds: &[usize], classes: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fne = vec![0usize; classes];
    for (&l, &p) in labels.iter().zip(preds) {
        if l >= classes {
            return Err(Error::ClassOutOfRange { index: l, classes });
        }
        if p >= classes {
            return Err(Error::ClassOutOfRange { index: p, classes });
        }
        if l == p {
            tp[l] += 1;
        } else {
            fne[l] += 1;
            fp[p] += 1;
        }
    }
    let mut total = 0.0;
    for c in 0..classes {
        let denom = 2 * tp[c] + fp[c] + fne[c];
        if denom > 0 {
            total += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok(total / classes as f64)
}

/// Euclidean distance between two distributions of equal length.
pub fn l2_distance(a: &SimplexVector, b: &SimplexVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} classes",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum.sqrt())
}

/// Median of finite values; the even case averages the two middle
/// elements. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    debug_assert!(values.iter().all(|v| v.is_finite()));
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Median/min/max of a metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Option<Aggregate> {
        let median = median(values)?;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(Aggregate { median, min, max })
    }
}

/// What one (method, seed) run contributed. Accuracy and macro F1 are
/// absent when the target carries no held-out labels, or for methods
/// that only estimate proportions; the estimate is absent for methods
/// that only classify.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    pub target_accuracy: Option<f64>,
    pub target_macro_f1: Option<f64>,
    pub estimate: Option<SimplexVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: String,
    pub seeds: Vec<u64>,
    pub accuracy: BTreeMap<Method, Aggregate>,
    pub macro_f1: BTreeMap<Method, Aggregate>,
    /// Distance from each method's estimate to the true target prior.
    pub estimate_distance: BTreeMap<Method, Aggregate>,
    /// Distance from the source prior to the true target prior: the
    /// error of not correcting for shift at all.
    pub prior_gap: Option<f64>,
    /// Wall-clock bookkeeping only; excluded from serialization so that
    /// report artifacts are byte-identical across reruns.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

/// Aggregates run outcomes for one task. `beta` is the true target
/// prior when known; without it the distance columns stay empty.
pub fn build_report(
    task: &str,
    runs: &[RunOutcome],
    beta: Option<&SimplexVector>,
    alpha_hat: &SimplexVector,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    let mut accuracy: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut f1: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut distance: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for run in runs {
        if let Some(acc) = run.target_accuracy {
            accuracy.entry(run.method).or_default().push(acc);
        }
        if let Some(v) = run.target_macro_f1 {
            f1.entry(run.method).or_default().push(v);
        }
        if let (Some(estimate), Some(beta)) = (&run.estimate, beta) {
            distance.entry(run.method).or_default().push(l2_distance(estimate, beta)?);
        }
    }
    let fold = |m: BTreeMap<Method, Vec<f64>>| {
        m.into_iter()
            .filter_map(|(k, v)| Aggregate::from_values(&v).map(|a| (k, a)))
            .collect()
    };
    let prior_gap = match beta {
        Some(beta) => Some(l2_distance(alpha_hat, beta)?),
        None => None,
    };
    Ok(ExperimentReport {
        task: task.to_string(),
        seeds: seeds.to_vec(),
        accuracy: fold(accuracy),
        macro_f1: fold(f1),
        estimate_distance: fold(distance),
        prior_gap,
        runtime_seconds: 0.0,
    })
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One CSV row per task and method; metrics a method does not produce
/// are left empty.
pub fn render_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from(
        "task,method,median_accuracy,min_accuracy,max_accuracy,median_macro_f1,\
         median_distance,min_distance,max_distance,prior_gap\n",
    );
    for report in reports {
        for method in Method::ALL {
            let acc = report.accuracy.get(&method);
            let f1 = report.macro_f1.get(&method);
            let dist = report.estimate_distance.get(&method);
            if acc.is_none() && dist.is_none() {
                continue;
            }
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                report.task,
                method,
                cell(acc.map(|a| a.median)),
                cell(acc.map(|a| a.min)),
                cell(acc.map(|a| a.max)),
                cell(f1.map(|a| a.median)),
                cell(dist.map(|a| a.median)),
                cell(dist.map(|a| a.min)),
                cell(dist.map(|a| a.max)),
                cell(report.prior_gap),
            ));
        }
    }
    out
}

/// Plain-text table with one line per task and method.
pub fn render_table(reports: &[ExperimentReport]) -> String {
    let header = ["task", "method", "accuracy (med [min, max])", "macro F1", "prior dist (med [min, max])"];
    let mut rows: Vec<[String; 5]> = Vec::new();
    for report in reports {
        for method in Method::ALL {
            let acc = report.accuracy.get(&method);
            let f1 = report.macro_f1.get(&method);
            let dist = report.estimate_distance.get(&method);
            if acc.is_none() && dist.is_none() {
                continue;
            }
            let span = |a: Option<&Aggregate>| match a {
                Some(a) => format!("{:.4} [{:.4}, {:.4}]", a.median, a.min, a.max),
                None => "-".to_string(),
            };
            rows.push([
                report.task.clone(),
                method.to_string(),
                span(acc),
                f1.map(|a| format!("{:.4}", a.median)).unwrap_or_else(|| "-".into()),
                span(dist),
            ]);
        }
    }
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |cells: [&str; 5], out: &mut String| {
        let line: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    emit(header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("  "));
    out.push('\n');
    for row in &rows {
        emit([&row[0], &row[1], &row[2], &row[3], &row[4]], &mut out);
    }
    out
}

/// Convenience: accuracy derived from a prediction run on a labeled set.
pub fn accuracy_vs_trace(labels: &[usize], preds: &[usize], classes: usize) -> Result<(f64, f64)> {
    let acc = accuracy(labels, preds)?;
    let joint = estimate_joint_confusion(labels, preds, classes)?;
    let trace = (0..classes).map(|c| joint.get(c, c)).sum();
    Ok((acc, trace))
}

//! Datasets: in-memory containers, synthetic Gaussian tasks, JSONL file
//! formats, and the review-text featurization pipeline.

pub mod io;
pub mod stem;
pub mod text;

pub use io::{
    load_corpus, load_dataset, parse_corpus_jsonl, parse_dataset_jsonl, save_dataset,
    DatasetFile, RawCorpus, RawEntity,
};
pub use text::{bow_pipeline, label_by_rating, BowOptions, BowOutput, BowVocabulary};

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::SimplexVector;
use crate::error::{Error, Result};

/// Feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::DimensionMismatch("zero classes".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::DimensionMismatch("zero feature dimensions".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        for &y in &labels {
            if y >= classes {
                return Err(Error::ClassOutOfRange { index: y, classes });
            }
        }
        Ok(Self { features, labels, classes })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in order. Indices must be in range.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let features = Array2::from_shape_fn((indices.len(), self.dim()), |(r, c)| {
            self.features[[indices[r], c]]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset { features, labels, classes: self.classes }
    }
}

/// Feature matrix whose labels are unknown to the training procedure.
/// Synthetic generators and evaluation-ready files may still carry the
/// true labels alongside, for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    features: Array2<f64>,
    classes: usize,
    hidden_labels: Option<Vec<usize>>,
}

impl UnlabeledDataset {
    pub fn new(features: Array2<f64>, classes: usize) -> Result<Self> {
        Self::build(features, classes, None)
    }

    pub fn with_hidden_labels(
        features: Array2<f64>,
        classes: usize,
        labels: Vec<usize>,
    ) -> Result<Self> {
        Self::build(features, classes, Some(labels))
    }

    fn build(
        features: Array2<f64>,
        classes: usize,
        hidden_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::DimensionMismatch("zero classes".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::DimensionMismatch("zero feature dimensions".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if let Some(labels) = &hidden_labels {
            if labels.len() != features.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} feature rows vs {} hidden labels",
                    features.nrows(),
                    labels.len()
                )));
            }
            for &y in labels {
                if y >= classes {
                    return Err(Error::ClassOutOfRange { index: y, classes });
                }
            }
        }
        Ok(Self { features, classes, hidden_labels })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// True labels, if the dataset carries them for evaluation.
    pub fn hidden_labels(&self) -> Option<&[usize]> {
        self.hidden_labels.as_deref()
    }
}

/// Recipe for a pair of Gaussian-mixture domains that differ only in
/// their label proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// One mean vector per class.
    pub class_means: Vec<Vec<f64>>,
    /// Isotropic standard deviation shared by all classes.
    pub covariance_scale: f64,
    /// Source label proportions.
    pub alpha: SimplexVector,
    /// Target label proportions.
    pub beta: SimplexVector,
    pub n_source: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::DimensionMismatch("classes and dim must be positive".into()));
        }
        if self.class_means.len() != self.classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class means for {} classes",
                self.class_means.len(),
                self.classes
            )));
        }
        for (i, mean) in self.class_means.iter().enumerate() {
            if mean.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "mean {i} has {} entries, dim is {}",
                    mean.len(),
                    self.dim
                )));
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("class means"));
            }
        }
        if !self.covariance_scale.is_finite() || self.covariance_scale <= 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "covariance scale must be positive, got {}",
                self.covariance_scale
            )));
        }
        if self.alpha.len() != self.classes || self.beta.len() != self.classes {
            return Err(Error::DimensionMismatch(
                "prior lengths must match the class count".into(),
            ));
        }
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::EmptySampleSet);
        }
        Ok(())
    }
}

/// Class means placed on separate coordinate axes at distance
/// `separation` from the origin, so any two means are
/// `separation * sqrt(2)` apart. Needs `dim >= classes`.
pub fn axis_aligned_means(classes: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if dim < classes {
        return Err(Error::DimensionMismatch(format!(
            "{classes} axis-aligned means need dim >= {classes}, got {dim}"
        )));
    }
    if !separation.is_finite() || separation <= 0.0 {
        return Err(Error::InvalidHyperParams(format!(
            "separation must be positive, got {separation}"
        )));
    }
    Ok((0..classes)
        .map(|c| {
            let mut mean = vec![0.0; dim];
            mean[c] = separation;
            mean
        })
        .collect())
}

/// Draws both domains from the shared class conditionals: labels from the
/// respective prior, then features from an isotropic Gaussian around the
/// class mean. One `ChaCha8` stream drives everything, so equal specs
/// produce equal datasets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, UnlabeledDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let sample_domain = |rng: &mut ChaCha8Rng,
                         prior: &SimplexVector,
                         n: usize|
     -> Result<(Array2<f64>, Vec<usize>)> {
        let weights = WeightedIndex::new(prior.iter().cloned()).map_err(|_| {
            Error::NotASimplex { sum: prior.iter().sum() }
        })?;
        let labels: Vec<usize> = (0..n).map(|_| weights.sample(rng)).collect();
        let mut features = Array2::zeros((n, spec.dim));
        for (i, &y) in labels.iter().enumerate() {
            for d in 0..spec.dim {
                let z: f64 = StandardNormal.sample(rng);
                features[[i, d]] = spec.class_means[y][d] + spec.covariance_scale * z;
            }
        }
        Ok((features, labels))
    };

    let (src_features, src_labels) = sample_domain(&mut rng, &spec.alpha, spec.n_source)?;
    let (tgt_features, tgt_labels) = sample_domain(&mut rng, &spec.beta, spec.n_target)?;
    let source = LabeledDataset::new(src_features, src_labels, spec.classes)?;
    let target =
        UnlabeledDataset::with_hidden_labels(tgt_features, spec.classes, tgt_labels)?;
    Ok((source, target))
}

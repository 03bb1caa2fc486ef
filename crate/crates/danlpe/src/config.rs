//! Experiment configuration: a TOML file describing the task, the
//! methods to run, and hyperparameter overrides.
//!
//! ```toml
//! [experiment]
//! name = "synthetic-shift"
//! seeds = [1, 2, 3]
//! methods = ["dnn", "dann", "dan_lpe", "bbse"]
//! out_dir = "runs/synthetic"
//!
//! [task.synthetic]
//! classes = 2
//! dim = 10
//! separation = 2.0
//! covariance_scale = 1.0
//! alpha = [0.5, 0.5]
//! beta = [0.9, 0.1]
//! n_source = 4000
//! n_target = 4000
//! seed = 7
//!
//! [hyperparams]
//! profile = "fast"
//! lambda_d = 0.2
//! ```
//!
//! Every artifact a run writes embeds [`config_hash`] so that reporting
//! can refuse to mix outputs produced under different configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{axis_aligned_means, BowOptions, SyntheticSpec};
use crate::distributions::SimplexVector;
use crate::error::{Error, Result};
use crate::eval::Method;
use crate::training::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub task: TaskSection,
    #[serde(default)]
    pub hyperparams: HyperParamsSection,
    #[serde(default)]
    pub estimate: EstimateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// One full run per seed per method.
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Directory all artifacts are written under.
    pub out_dir: PathBuf,
}

/// Exactly one of the two task kinds must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<FilesTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub classes: usize,
    pub dim: usize,
    /// Convenience for axis-aligned class means; mutually exclusive
    /// with `class_means`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_means: Option<Vec<Vec<f64>>>,
    pub covariance_scale: f64,
    /// Source class prior.
    pub alpha: Vec<f64>,
    /// Target class prior.
    pub beta: Vec<f64>,
    pub n_source: usize,
    pub n_target: usize,
    /// Seed for data generation, independent of the training seeds.
    pub seed: u64,
}

impl SyntheticTask {
    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        let class_means = match (&self.class_means, self.separation) {
            (Some(means), None) => means.clone(),
            (None, Some(separation)) => {
                axis_aligned_means(self.classes, self.dim, separation)?
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "task.synthetic: give separation or class_means, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "task.synthetic: one of separation or class_means is required".into(),
                ))
            }
        };
        let spec = SyntheticSpec {
            classes: self.classes,
            dim: self.dim,
            class_means,
            covariance_scale: self.covariance_scale,
            alpha: SimplexVector::new(self.alpha.clone())?,
            beta: SimplexVector::new(self.beta.clone())?,
            n_source: self.n_source,
            n_target: self.n_target,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesTask {
    pub source: PathBuf,
    pub target: PathBuf,
    /// When present, `source` and `target` are raw review corpora that
    /// must be featurized into datasets first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub featurize: Option<FeaturizeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizeSection {
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_per_domain_common")]
    pub per_domain_common: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<Vec<String>>,
}

fn default_vocab_size() -> usize {
    500
}

fn default_per_domain_common() -> usize {
    837
}

impl Default for FeaturizeSection {
    fn default() -> Self {
        FeaturizeSection {
            vocab_size: default_vocab_size(),
            per_domain_common: default_per_domain_common(),
            stopwords: None,
        }
    }
}

impl FeaturizeSection {
    pub fn options(&self) -> BowOptions {
        BowOptions {
            vocab_size: self.vocab_size,
            per_domain_common: self.per_domain_common,
            stopwords: self.stopwords.clone(),
        }
    }
}

/// Named hyperparameter baseline plus per-field overrides. The `seed`
/// is deliberately absent: runs take it from `experiment.seeds`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParamsSection {
    /// "review" (the default), "coding", or "fast" for smoke-test scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_period: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_period: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weighting: Option<bool>,
}

/// Wider heads, lighter dropout, and inverse-frequency class weights:
/// the preset for imbalanced multi-class utterance tasks.
fn coding_profile() -> HyperParams {
    HyperParams {
        hidden: 128,
        dropout: 0.4,
        class_weighting: true,
        ..HyperParams::default()
    }
}

/// Small everything: finishes in seconds for smoke tests.
fn fast_profile() -> HyperParams {
    HyperParams {
        iterations: 500,
        warmup: 100,
        update_period: 5,
        batch_size: 32,
        learning_rate: 1e-3,
        dropout: 0.1,
        hidden: 16,
        eval_period: 50,
        patience: 5,
        ..HyperParams::default()
    }
}

impl HyperParamsSection {
    /// The profile baseline with every override applied, validated.
    pub fn build(&self) -> Result<HyperParams> {
        let mut hp = match self.profile.as_deref() {
            None | Some("review") => HyperParams::default(),
            Some("coding") => coding_profile(),
            Some("fast") => fast_profile(),
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown hyperparams profile \"{other}\" (expected review, coding, or fast)"
                )))
            }
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(value) = self.$field.clone() {
                    hp.$field = value;
                })*
            };
        }
        apply!(
            lambda_d, lambda_l, iterations, warmup, update_period, inner_steps,
            batch_size, learning_rate, dropout, hidden, eval_period, patience,
            min_delta, validation_fraction, class_weighting
        );
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Convergence threshold on the estimate's movement per round.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Condition number cap for the exact solver route.
    #[serde(default = "default_condition_cap")]
    pub condition_cap: f64,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_rounds() -> usize {
    10_000
}

fn default_condition_cap() -> f64 {
    1e8
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            tolerance: default_tolerance(),
            max_rounds: default_max_rounds(),
            condition_cap: default_condition_cap(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.experiment.name.is_empty() {
            return fail("experiment.name must not be empty".into());
        }
        if self.experiment.seeds.is_empty() {
            return fail("experiment.seeds must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &seed in &self.experiment.seeds {
            if !seen.insert(seed) {
                return fail(format!("experiment.seeds repeats seed {seed}"));
            }
        }
        if self.experiment.methods.is_empty() {
            return fail("experiment.methods must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &method in &self.experiment.methods {
            if !seen.insert(method) {
                return fail(format!("experiment.methods repeats \"{method}\""));
            }
        }
        match (&self.task.synthetic, &self.task.files) {
            (Some(synthetic), None) => {
                synthetic.to_spec()?;
            }
            (None, Some(files)) => {
                if let Some(featurize) = &files.featurize {
                    if featurize.vocab_size == 0 {
                        return fail("task.files.featurize.vocab_size must be positive".into());
                    }
                    if featurize.per_domain_common == 0 {
                        return fail(
                            "task.files.featurize.per_domain_common must be positive".into(),
                        );
                    }
                }
            }
            (Some(_), Some(_)) => {
                return fail("task: give synthetic or files, not both".into());
            }
            (None, None) => {
                return fail("task: one of synthetic or files is required".into());
            }
        }
        self.hyperparams.build()?;
        if !self.estimate.tolerance.is_finite() || self.estimate.tolerance <= 0.0 {
            return fail("estimate.tolerance must be finite and positive".into());
        }
        if self.estimate.max_rounds == 0 {
            return fail("estimate.max_rounds must be positive".into());
        }
        if !self.estimate.condition_cap.is_finite() || self.estimate.condition_cap <= 1.0 {
            return fail("estimate.condition_cap must be finite and above 1".into());
        }
        Ok(())
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Fingerprint of the effective configuration: SHA-256 over its
/// canonical JSON form. Struct fields serialize in declaration order,
/// so equal configs hash equally regardless of TOML formatting.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical =
        serde_json::to_string(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

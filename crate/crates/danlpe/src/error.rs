//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An estimator was handed zero samples.
    #[error("empty sample set")]
    EmptySampleSet,

    /// A label or prediction lies outside `0..classes`.
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    /// A class never occurs in the sample, so a conditional on it is undefined.
    #[error("class {class} absent from sample")]
    ClassAbsent { class: usize },

    /// Incompatible shapes between two inputs that must agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A vector that should lie on the probability simplex does not.
    #[error("not a probability vector (sum {sum:.9})")]
    NotASimplex { sum: f64 },

    /// A probability entry is negative beyond rounding tolerance.
    #[error("negative probability {value:.3e} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    /// A NaN or infinity showed up where a finite number is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The floor clamp cannot produce a valid vector, for example because
    /// `classes * floor > 1` or every coordinate sits below the floor.
    #[error("degenerate simplex")]
    DegenerateSimplex,

    /// A probability that must be strictly positive is zero.
    #[error("zero entry at class {class} in {vector}")]
    ZeroEntry { class: usize, vector: &'static str },

    /// The confusion matrix is too close to singular to invert reliably.
    #[error("singular or ill-conditioned matrix (condition estimate {cond:.3e}, cap {cap:.3e})")]
    IllConditioned { cond: f64, cap: f64 },

    /// A hyperparameter fails its validity constraint.
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParams(String),

    /// Training produced a non-finite loss or gradient.
    #[error("diverged: non-finite {what} at iteration {iteration}")]
    Diverged { what: &'static str, iteration: u64 },

    /// A class required by the procedure is missing from the training split.
    #[error("class {class} missing from training split")]
    MissingClass { class: usize },

    /// The forward cache does not match the parameters it is replayed against.
    #[error("stale forward cache: {0}")]
    StaleCache(String),

    /// The two domains share no common vocabulary after filtering.
    #[error("empty vocabulary intersection")]
    EmptyVocabulary,

    /// A dataset or corpus file violates the JSONL schema.
    #[error("malformed dataset at line {line}: {message}")]
    MalformedDataset { line: usize, message: String },

    /// A checkpoint file violates the binary layout.
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    /// An experiment config fails parsing or validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An artifact was produced under a different config than the one loaded.
    #[error("config hash mismatch: {0}")]
    ConfigHashMismatch(String),

    /// An artifact file is unreadable or inconsistent with the request.
    #[error("bad artifact {path}: {message}")]
    BadArtifact { path: String, message: String },

    /// A training or estimation run failed, tagged with the run identity.
    #[error("run {run_id} failed: {source}")]
    RunFailed { run_id: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

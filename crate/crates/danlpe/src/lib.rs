//! Domain-adversarial training with label proportion estimation.
//!
//! Under label shift the class proportions of an unlabeled target domain
//! differ from the source proportions while the class-conditional feature
//! distributions stay put. This crate trains a domain-adversarial network
//! and, interleaved with the adversarial updates, estimates the target
//! label proportions by moment matching on the classifier's confusion
//! statistics. The estimate then reweights the domain loss in a second
//! training pass so the feature extractor aligns the right distributions.
//!
//! Module map:
//!
//! * [`distributions`]: probability vectors, joint confusion estimates and
//!   their row-normalized conditionals.
//! * [`lpe`]: the label proportion estimator (projected gradient on the
//!   simplex plus an exact linear-solve reference).
//! * [`baselines`]: black-box shift estimation from the same confusion
//!   statistics.
//! * [`network`]: a small feedforward network with a gradient reversal
//!   coupling, manual backprop, Adam, and a binary checkpoint format.
//! * [`training`]: the two-step training procedure and the DNN / DANN
//!   baselines.
//! * [`data`]: synthetic Gaussian tasks, JSONL dataset files, and a
//!   bag-of-words pipeline for raw review text.
//! * [`eval`]: accuracy, macro F1, estimation error, report rendering.
//! * [`config`] / [`runner`]: TOML experiment configs and the artifact
//!   producing command implementations behind the CLI.
//!
//! Every run is driven by a single `ChaCha8` stream seeded from one master
//! seed; identical config plus seed reproduces identical artifacts, byte
//! for byte.

pub mod baselines;
pub mod config;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod lpe;
pub mod network;
pub mod runner;
pub mod training;

pub use error::{Error, Result};

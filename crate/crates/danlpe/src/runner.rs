//! Experiment runner: resolves the configured task into datasets, fans
//! training out over seeds, and owns every artifact file a run writes.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.json                          resolved config + its hash
//! source.jsonl, target.jsonl           generate / featurize outputs
//! vocabulary.json                      featurize output
//! train_report_<method>_seed<N>.json   summaries + scored outcome
//! events_<method>_seed<N>.jsonl        per-iteration event stream
//! checkpoint_<method>_seed<N>_*.bin    network weights
//! estimate_<method>_seed<N>.json       proportion estimates
//! estimate_standalone.json             output of the estimate command
//! report.csv, report.txt, report.json  aggregated tables
//! ```
//!
//! Every artifact embeds the config hash (and seed where one applies),
//! and reporting refuses to aggregate files whose hash does not match
//! the loaded config. All JSON is serialized from structs with fixed
//! field order, so a rerun under the same config reproduces every file
//! byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bbse_estimate_with_cap, BbseResult};
use crate::config::{config_hash, ExperimentConfig, FilesTask};
use crate::data::{
    generate_synthetic, load_corpus, load_dataset, save_dataset, BowVocabulary, DatasetFile,
    LabeledDataset, RawCorpus, UnlabeledDataset,
};
use crate::distributions::{
    empirical_prior, estimate_joint_confusion, prediction_histogram, row_normalize,
    SimplexVector,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, build_report, macro_f1, render_csv, render_table, Method, RunOutcome,
};
use crate::lpe::{run_to_convergence, LpeConfig, LpeState};
use crate::network::{load_checkpoint, predict, save_checkpoint, NetworkParameters};
use crate::training::{
    dann_baseline, dnn_baseline, source_split, step1_train, step2_train, HyperParams,
    TrainReport, TrainSummary,
};

/// A validated config plus the derived pieces every command needs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub hash: String,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config: ExperimentConfig) -> Self {
        let out_dir = config.experiment.out_dir.clone();
        Self::with_out_dir(config, out_dir)
    }

    /// Overrides the output directory, for example from a CLI flag.
    pub fn with_out_dir(config: ExperimentConfig, out_dir: PathBuf) -> Self {
        let hash = config_hash(&config);
        RunContext { config, hash, out_dir }
    }

    fn hyperparams(&self, seed: u64) -> Result<HyperParams> {
        let mut hp = self.config.hyperparams.build()?;
        hp.seed = seed;
        Ok(hp)
    }
}

/// The two domains a run trains on, however the config sourced them.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub source: LabeledDataset,
    pub target: UnlabeledDataset,
}

impl TaskData {
    /// Empirical source proportions over the full dataset.
    pub fn alpha_hat(&self) -> Result<SimplexVector> {
        empirical_prior(self.source.labels(), self.source.classes())
    }

    /// Empirical target proportions, when the data carries true labels.
    pub fn beta_hat(&self) -> Result<Option<SimplexVector>> {
        match self.target.hidden_labels() {
            Some(labels) => Ok(Some(empirical_prior(labels, self.target.classes())?)),
            None => Ok(None),
        }
    }
}

/// Loads or generates the configured task. Synthetic tasks regenerate
/// deterministically from their own data seed; file tasks load datasets
/// directly or featurize raw corpora in memory.
pub fn task_data(config: &ExperimentConfig) -> Result<TaskData> {
    if let Some(synthetic) = &config.task.synthetic {
        let spec = synthetic.to_spec()?;
        let (source, target) = generate_synthetic(&spec)?;
        return Ok(TaskData { source, target });
    }
    let files = config.task.files.as_ref().ok_or_else(|| {
        Error::InvalidConfig("task: one of synthetic or files is required".into())
    })?;
    if files.featurize.is_some() {
        let (source, target, _vocab) = featurized_datasets(files)?;
        return Ok(TaskData { source, target });
    }
    let source = match load_dataset(&files.source)? {
        DatasetFile::Source(ds) => ds,
        DatasetFile::Target(_) => {
            return Err(Error::InvalidConfig(format!(
                "{} holds a target dataset but is configured as the source",
                files.source.display()
            )))
        }
    };
    let target = match load_dataset(&files.target)? {
        DatasetFile::Target(ds) => ds,
        DatasetFile::Source(_) => {
            return Err(Error::InvalidConfig(format!(
                "{} holds a source dataset but is configured as the target",
                files.target.display()
            )))
        }
    };
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "source has {} features, target has {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.classes() != target.classes() {
        return Err(Error::DimensionMismatch(format!(
            "source declares {} classes, target {}",
            source.classes(),
            target.classes()
        )));
    }
    Ok(TaskData { source, target })
}

/// An entity's label: explicit if present, otherwise derived from its
/// rating. `None` means unlabeled (or filtered out by the rating gap).
fn entity_label(entity: &crate::data::RawEntity) -> Option<usize> {
    entity.label.or_else(|| entity.rating.and_then(crate::data::label_by_rating))
}

/// Featurizes a pair of raw corpora into train-ready datasets.
///
/// Source entities without a label are dropped; they cannot train a
/// classifier. On the target side, if any entity resolves to a label the
/// corpus is treated as evaluation-ready: unlabeled entities are dropped
/// (the rating gap filters both domains) and the rest keep their labels
/// hidden for scoring. A corpus with no labels at all is kept whole.
pub fn featurized_datasets(
    files: &FilesTask,
) -> Result<(LabeledDataset, UnlabeledDataset, BowVocabulary)> {
    let featurize = files.featurize.clone().unwrap_or_default();
    let options = featurize.options();
    let raw_source = load_corpus(&files.source)?;
    let raw_target = load_corpus(&files.target)?;

    let mut source_entities = Vec::new();
    let mut source_labels = Vec::new();
    for entity in raw_source.entities {
        if let Some(label) = entity_label(&entity) {
            source_entities.push(entity);
            source_labels.push(label);
        }
    }
    if source_entities.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{}: no source entity has a label or a rating outside the gap",
            files.source.display()
        )));
    }

    let target_has_labels = raw_target.entities.iter().any(|e| entity_label(e).is_some());
    let mut target_entities = Vec::new();
    let mut target_labels = Vec::new();
    for entity in raw_target.entities {
        match entity_label(&entity) {
            Some(label) => {
                target_entities.push(entity);
                target_labels.push(label);
            }
            None if !target_has_labels => target_entities.push(entity),
            None => {} // rating inside the gap on a labeled corpus
        }
    }
    if target_entities.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{}: every target entity fell inside the rating gap",
            files.target.display()
        )));
    }

    let source_corpus = RawCorpus { entities: source_entities };
    let target_corpus = RawCorpus { entities: target_entities };
    let bow = crate::data::bow_pipeline(&source_corpus, &target_corpus, &options)?;

    let max_label = source_labels
        .iter()
        .chain(target_labels.iter())
        .copied()
        .max()
        .expect("source labels are non-empty");
    let classes = max_label + 1;
    let source = LabeledDataset::new(bow.source, source_labels, classes)?;
    let target = if target_has_labels {
        UnlabeledDataset::with_hidden_labels(bow.target, classes, target_labels)?
    } else {
        UnlabeledDataset::new(bow.target, classes)?
    };
    Ok((source, target, bow.vocabulary))
}

// ---------------------------------------------------------------------
// Artifact schemas
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ConfigArtifact<'a> {
    config_hash: &'a str,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabularyArtifact {
    config_hash: String,
    tokens: Vec<String>,
}

/// Per-run metrics as stored on disk. Mirrors [`RunOutcome`] minus the
/// identity fields, which live at the artifact top level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<SimplexVector>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReportArtifact {
    pub experiment: String,
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    /// Estimation-phase summary, present only for the two-step method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step1_summary: Option<TrainSummary>,
    pub summary: TrainSummary,
    pub outcome: StoredOutcome,
}

/// [`BbseResult`] in serializable form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BbseArtifact {
    pub beta_hat: SimplexVector,
    pub raw_weights: Vec<f64>,
    pub clipped: bool,
}

impl From<BbseResult> for BbseArtifact {
    fn from(r: BbseResult) -> Self {
        BbseArtifact { beta_hat: r.beta_hat, raw_weights: r.raw_weights, clipped: r.clipped }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateArtifact {
    pub experiment: String,
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    /// Source prior on the training split, the no-correction reference.
    pub alpha_tilde: SimplexVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_dl: Option<SimplexVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbse: Option<BbseArtifact>,
}

/// Output of the standalone estimate command.
#[derive(Debug, Serialize, Deserialize)]
pub struct StandaloneEstimate {
    pub config_hash: String,
    pub checkpoint: String,
    /// Full-source empirical prior used as the system's reference.
    pub alpha_hat: SimplexVector,
    pub q_hat: SimplexVector,
    pub gamma_lpe: SimplexVector,
    pub estimation_loss: f64,
    pub lpe_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbse: Option<BbseArtifact>,
}

#[derive(Debug, Serialize)]
struct EventsHeader<'a> {
    run_id: String,
    experiment: &'a str,
    config_hash: &'a str,
    method: Method,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct EventLine<'a> {
    /// 1 for the single phase of one-step methods; the two-step method
    /// logs its estimation phase as 1 and its correction phase as 2.
    phase: u8,
    iteration: u64,
    j_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    j_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    j_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<&'a SimplexVector>,
}

// ---------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::BadArtifact { path: path.display().to_string(), message: e.to_string() })?;
    text.push('\n');
    write_text(path, &text)
}

fn write_config_artifact(ctx: &RunContext) -> Result<()> {
    let artifact = ConfigArtifact { config_hash: &ctx.hash, config: &ctx.config };
    write_json(&ctx.out_dir.join("config.json"), &artifact)
}

fn run_file(ctx: &RunContext, kind: &str, method: Method, seed: u64, ext: &str) -> PathBuf {
    ctx.out_dir.join(format!("{kind}_{method}_seed{seed}.{ext}"))
}

fn render_events(header: &EventsHeader<'_>, phases: &[(u8, &TrainSummary)]) -> Result<String> {
    let mut out = serde_json::to_string(header)
        .map_err(|e| Error::BadArtifact { path: header.run_id.clone(), message: e.to_string() })?;
    out.push('\n');
    for &(phase, summary) in phases {
        let validation: BTreeMap<u64, f64> =
            summary.curves.validation.iter().map(|v| (v.iteration, v.loss)).collect();
        let snapshots: BTreeMap<u64, _> =
            summary.gamma_trajectory.iter().map(|g| (g.iteration, g)).collect();
        for (i, &j_c) in summary.curves.class_loss.iter().enumerate() {
            let iteration = i as u64 + 1;
            let snapshot = snapshots.get(&iteration);
            let line = EventLine {
                phase,
                iteration,
                j_c,
                j_d: summary.curves.domain_loss.get(i).copied(),
                validation_loss: validation.get(&iteration).copied(),
                j_gamma: snapshot.map(|g| g.estimation_loss),
                gamma: snapshot.map(|g| &g.gamma),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| Error::BadArtifact {
                path: header.run_id.clone(),
                message: e.to_string(),
            })?);
            out.push('\n');
        }
    }
    Ok(out)
}

fn write_run_artifacts(
    ctx: &RunContext,
    method: Method,
    seed: u64,
    step1_summary: Option<&TrainSummary>,
    summary: &TrainSummary,
    outcome: &RunOutcome,
    checkpoints: &[(&str, &NetworkParameters)],
    estimate: Option<&EstimateArtifact>,
) -> Result<()> {
    let report = TrainReportArtifact {
        experiment: ctx.config.experiment.name.clone(),
        config_hash: ctx.hash.clone(),
        method,
        seed,
        step1_summary: step1_summary.cloned(),
        summary: summary.clone(),
        outcome: StoredOutcome {
            target_accuracy: outcome.target_accuracy,
            target_macro_f1: outcome.target_macro_f1,
            estimate: outcome.estimate.clone(),
        },
    };
    write_json(&run_file(ctx, "train_report", method, seed, "json"), &report)?;

    let header = EventsHeader {
        run_id: format!("{method}_seed{seed}"),
        experiment: &ctx.config.experiment.name,
        config_hash: &ctx.hash,
        method,
        seed,
    };
    let mut phases = Vec::new();
    if let Some(s1) = step1_summary {
        phases.push((1, s1));
        phases.push((2, summary));
    } else {
        phases.push((1, summary));
    }
    let events = render_events(&header, &phases)?;
    write_text(&run_file(ctx, "events", method, seed, "jsonl"), &events)?;

    for (tag, params) in checkpoints {
        let path = ctx.out_dir.join(format!("checkpoint_{method}_seed{seed}_{tag}.bin"));
        save_checkpoint(params, &path)?;
    }
    if let Some(estimate) = estimate {
        write_json(&run_file(ctx, "estimate", method, seed, "json"), estimate)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------

/// Writes the configured synthetic task out as dataset files.
pub fn cmd_generate(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let synthetic = ctx.config.task.synthetic.as_ref().ok_or_else(|| {
        Error::InvalidConfig("generate requires a synthetic task".into())
    })?;
    let spec = synthetic.to_spec()?;
    let (source, target) = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_config_artifact(ctx)?;
    let source_path = ctx.out_dir.join("source.jsonl");
    let target_path = ctx.out_dir.join("target.jsonl");
    write_text(&source_path, &save_dataset(&DatasetFile::Source(source)))?;
    write_text(&target_path, &save_dataset(&DatasetFile::Target(target)))?;
    Ok(vec![source_path, target_path])
}

/// Featurizes the configured raw corpora and writes the datasets plus
/// the vocabulary that produced them.
pub fn cmd_featurize(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let files = ctx.config.task.files.as_ref().ok_or_else(|| {
        Error::InvalidConfig("featurize requires a files task".into())
    })?;
    if files.featurize.is_none() {
        return Err(Error::InvalidConfig(
            "featurize requires [task.files.featurize] options".into(),
        ));
    }
    let (source, target, vocabulary) = featurized_datasets(files)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_config_artifact(ctx)?;
    let source_path = ctx.out_dir.join("source.jsonl");
    let target_path = ctx.out_dir.join("target.jsonl");
    let vocab_path = ctx.out_dir.join("vocabulary.json");
    write_text(&source_path, &save_dataset(&DatasetFile::Source(source)))?;
    write_text(&target_path, &save_dataset(&DatasetFile::Target(target)))?;
    let vocab = VocabularyArtifact {
        config_hash: ctx.hash.clone(),
        tokens: vocabulary.tokens().to_vec(),
    };
    write_json(&vocab_path, &vocab)?;
    Ok(vec![source_path, target_path, vocab_path])
}

/// Scores a classifier on the target domain, when its labels are known.
fn score_classifier(
    data: &TaskData,
    method: Method,
    seed: u64,
    params: &NetworkParameters,
) -> Result<RunOutcome> {
    let predictions = predict(params, data.target.features())?;
    let (target_accuracy, target_macro_f1) = match data.target.hidden_labels() {
        Some(labels) => (
            Some(accuracy(labels, &predictions)?),
            Some(macro_f1(labels, &predictions, data.target.classes())?),
        ),
        None => (None, None),
    };
    Ok(RunOutcome { method, seed, target_accuracy, target_macro_f1, estimate: None })
}

/// Confusion-inversion estimate from a trained classifier, computed on
/// the same split the in-loop estimator sees: training-split source
/// predictions against training-split labels, full-target histogram.
fn bbse_from_classifier(
    ctx: &RunContext,
    data: &TaskData,
    hp: &HyperParams,
    params: &NetworkParameters,
) -> Result<(BbseResult, SimplexVector)> {
    let (train, _val) = source_split(&data.source, hp)?;
    let classes = train.classes();
    let predictions = predict(params, train.features())?;
    let joint = estimate_joint_confusion(train.labels(), &predictions, classes)?;
    let alpha_tilde = empirical_prior(train.labels(), classes)?;
    let target_predictions = predict(params, data.target.features())?;
    let q_hat = prediction_histogram(&target_predictions, classes)?;
    let result = bbse_estimate_with_cap(
        &joint,
        &q_hat,
        &alpha_tilde,
        ctx.config.estimate.condition_cap,
    )?;
    Ok((result, alpha_tilde))
}

/// Runs one method for one seed and writes its artifacts. The step-1
/// report is cached per seed so that the estimator comparison consumes
/// the exact same classifier the two-step method produced.
fn run_method(
    ctx: &RunContext,
    data: &TaskData,
    method: Method,
    seed: u64,
    step1_cache: &mut Option<TrainReport>,
) -> Result<RunOutcome> {
    let hp = ctx.hyperparams(seed)?;
    let step1 = |cache: &mut Option<TrainReport>| -> Result<TrainReport> {
        if let Some(report) = cache.as_ref() {
            return Ok(report.clone());
        }
        let report = step1_train(&data.source, &data.target, &hp)?;
        *cache = Some(report.clone());
        Ok(report)
    };
    match method {
        Method::Dnn => {
            let report = dnn_baseline(&data.source, &hp)?;
            let outcome = score_classifier(data, method, seed, &report.best)?;
            write_run_artifacts(
                ctx,
                method,
                seed,
                None,
                &report.summary,
                &outcome,
                &[("best", &report.best), ("final", &report.last)],
                None,
            )?;
            Ok(outcome)
        }
        Method::Dann => {
            let report = dann_baseline(&data.source, &data.target, &hp)?;
            let outcome = score_classifier(data, method, seed, &report.best)?;
            write_run_artifacts(
                ctx,
                method,
                seed,
                None,
                &report.summary,
                &outcome,
                &[("best", &report.best), ("final", &report.last)],
                None,
            )?;
            Ok(outcome)
        }
        Method::DanLpe => {
            let step1 = step1(step1_cache)?;
            let gamma = step1.summary.gamma_final.clone();
            let step2 = step2_train(&data.source, &data.target, &gamma, &hp)?;
            let mut outcome = score_classifier(data, method, seed, &step2.best)?;
            outcome.estimate = Some(gamma.clone());
            let estimate = EstimateArtifact {
                experiment: ctx.config.experiment.name.clone(),
                config_hash: ctx.hash.clone(),
                method,
                seed,
                alpha_tilde: step1.summary.alpha_tilde.clone(),
                gamma_dl: Some(gamma),
                bbse: None,
            };
            write_run_artifacts(
                ctx,
                method,
                seed,
                Some(&step1.summary),
                &step2.summary,
                &outcome,
                &[
                    ("step1_final", &step1.last),
                    ("best", &step2.best),
                    ("final", &step2.last),
                ],
                Some(&estimate),
            )?;
            Ok(outcome)
        }
        Method::Bbse => {
            let step1 = step1(step1_cache)?;
            let (result, alpha_tilde) = bbse_from_classifier(ctx, data, &hp, &step1.last)?;
            let outcome = RunOutcome {
                method,
                seed,
                target_accuracy: None,
                target_macro_f1: None,
                estimate: Some(result.beta_hat.clone()),
            };
            let estimate = EstimateArtifact {
                experiment: ctx.config.experiment.name.clone(),
                config_hash: ctx.hash.clone(),
                method,
                seed,
                alpha_tilde,
                gamma_dl: None,
                bbse: Some(result.into()),
            };
            write_run_artifacts(
                ctx,
                method,
                seed,
                None,
                &step1.summary,
                &outcome,
                &[("final", &step1.last)],
                Some(&estimate),
            )?;
            Ok(outcome)
        }
    }
}

fn run_seed(ctx: &RunContext, data: &TaskData, seed: u64) -> Result<Vec<RunOutcome>> {
    let mut outcomes = Vec::new();
    let mut step1_cache: Option<TrainReport> = None;
    for &method in &ctx.config.experiment.methods {
        let outcome =
            run_method(ctx, data, method, seed, &mut step1_cache).map_err(|e| {
                Error::RunFailed { run_id: format!("{method}_seed{seed}"), source: Box::new(e) }
            })?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Trains every configured method across every seed. Seeds fan out to
/// the rayon pool; each worker owns its seed's runs exclusively, and
/// results merge back in seed order.
pub fn cmd_train(ctx: &RunContext) -> Result<Vec<RunOutcome>> {
    let data = task_data(&ctx.config)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_config_artifact(ctx)?;
    let per_seed: Vec<Result<Vec<RunOutcome>>> = ctx
        .config
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| run_seed(ctx, &data, seed))
        .collect();
    let mut outcomes = Vec::new();
    for result in per_seed {
        outcomes.extend(result?);
    }
    outcomes.sort_by_key(|o| (o.method, o.seed));
    Ok(outcomes)
}

/// Standalone proportion estimation from a saved classifier: the
/// moment-matching iterate from uniform init, plus confusion inversion
/// when the system is well conditioned. Unlike the in-loop path this
/// uses the full source set; the checkpoint owes it nothing.
pub fn cmd_estimate(ctx: &RunContext, checkpoint: &Path) -> Result<StandaloneEstimate> {
    let data = task_data(&ctx.config)?;
    let params = load_checkpoint(checkpoint)?;
    let hp = ctx.config.hyperparams.build()?;
    let classes = data.source.classes();

    let predictions = predict(&params, data.source.features())?;
    let joint = estimate_joint_confusion(data.source.labels(), &predictions, classes)?;
    let p_cond = row_normalize(&joint)?;
    let alpha_hat = empirical_prior(data.source.labels(), classes)?;
    let target_predictions = predict(&params, data.target.features())?;
    let q_hat = prediction_histogram(&target_predictions, classes)?;

    let lpe_config = LpeConfig::new(hp.lambda_l, hp.inner_steps)?;
    let state = run_to_convergence(
        &LpeState::uniform(classes),
        &lpe_config,
        &p_cond,
        &q_hat,
        ctx.config.estimate.tolerance,
        ctx.config.estimate.max_rounds,
    )?;

    let bbse = match bbse_estimate_with_cap(
        &joint,
        &q_hat,
        &alpha_hat,
        ctx.config.estimate.condition_cap,
    ) {
        Ok(result) => Some(result.into()),
        // The iterate still stands on its own when inversion is hopeless.
        Err(Error::IllConditioned { .. }) => None,
        Err(e) => return Err(e),
    };

    let artifact = StandaloneEstimate {
        config_hash: ctx.hash.clone(),
        checkpoint: checkpoint.display().to_string(),
        alpha_hat,
        q_hat,
        gamma_lpe: state.gamma,
        estimation_loss: state.last_loss,
        lpe_steps: state.step_count,
        bbse,
    };
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_json(&ctx.out_dir.join("estimate_standalone.json"), &artifact)?;
    Ok(artifact)
}

fn read_run_artifact(ctx: &RunContext, method: Method, seed: u64) -> Result<TrainReportArtifact> {
    let path = run_file(ctx, "train_report", method, seed, "json");
    let display = path.display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::BadArtifact {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let artifact: TrainReportArtifact = serde_json::from_str(&text)
        .map_err(|e| Error::BadArtifact { path: display.clone(), message: e.to_string() })?;
    if artifact.config_hash != ctx.hash {
        return Err(Error::ConfigHashMismatch(format!(
            "{display} was produced under {}, current config is {}",
            artifact.config_hash, ctx.hash
        )));
    }
    if artifact.method != method || artifact.seed != seed {
        return Err(Error::BadArtifact {
            path: display,
            message: format!(
                "holds {}_seed{}, expected {method}_seed{seed}",
                artifact.method, artifact.seed
            ),
        });
    }
    Ok(artifact)
}

/// Aggregates the run artifacts under the output directory into the
/// report tables. Every artifact must carry the loaded config's hash.
pub fn cmd_report(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let data = task_data(&ctx.config)?;
    let alpha_hat = data.alpha_hat()?;
    let beta_hat = data.beta_hat()?;

    let mut runs = Vec::new();
    for &method in &ctx.config.experiment.methods {
        for &seed in &ctx.config.experiment.seeds {
            let artifact = read_run_artifact(ctx, method, seed)?;
            runs.push(RunOutcome {
                method,
                seed,
                target_accuracy: artifact.outcome.target_accuracy,
                target_macro_f1: artifact.outcome.target_macro_f1,
                estimate: artifact.outcome.estimate,
            });
        }
    }
    runs.sort_by_key(|r| (r.method, r.seed));

    let report = build_report(
        &ctx.config.experiment.name,
        &runs,
        beta_hat.as_ref(),
        &alpha_hat,
        &ctx.config.experiment.seeds,
    )?;
    let reports = [report];
    let csv_path = ctx.out_dir.join("report.csv");
    let txt_path = ctx.out_dir.join("report.txt");
    let json_path = ctx.out_dir.join("report.json");
    write_text(&csv_path, &render_csv(&reports))?;
    write_text(&txt_path, &render_table(&reports))?;
    write_json(&json_path, &reports[0])?;
    Ok(vec![csv_path, txt_path, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    /// Fresh directory under the system temp root; any leftover from a
    /// previous run of the same test is cleared first.
    fn temp_out(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("danlpe_runner_{tag}"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).unwrap();
        }
        dir
    }

    fn small_config(out_dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
            [experiment]
            name = "runner-test"
            seeds = [1, 2]
            methods = ["dnn", "dann", "dan_lpe", "bbse"]
            out_dir = "{}"

            [task.synthetic]
            classes = 2
            dim = 2
            separation = 3.0
            covariance_scale = 0.4
            alpha = [0.5, 0.5]
            beta = [0.8, 0.2]
            n_source = 120
            n_target = 120
            seed = 7

            [hyperparams]
            iterations = 40
            warmup = 10
            update_period = 10
            batch_size = 16
            learning_rate = 1e-2
            dropout = 0.0
            hidden = 8
            eval_period = 20
            patience = 0
            validation_fraction = 0.2
            "#,
            out_dir.display()
        );
        parse_config_str(&text).unwrap()
    }

    fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name().into_string().unwrap();
            out.insert(name, std::fs::read(entry.path()).unwrap());
        }
        out
    }

    #[test]
    fn train_and_report_write_consistent_artifacts() {
        let out = temp_out("full");
        let ctx = RunContext::new(small_config(&out));
        let outcomes = cmd_train(&ctx).unwrap();
        assert_eq!(outcomes.len(), 8); // 4 methods x 2 seeds

        // Identity fields and hash agree with the context.
        let artifact = read_run_artifact(&ctx, Method::DanLpe, 1).unwrap();
        assert_eq!(artifact.experiment, "runner-test");
        assert!(artifact.step1_summary.is_some());
        assert!(artifact.outcome.estimate.is_some());

        // The estimator comparison consumed the shared classifier: the
        // two checkpoint files must be byte-identical.
        let step1 = std::fs::read(out.join("checkpoint_dan_lpe_seed1_step1_final.bin")).unwrap();
        let bbse = std::fs::read(out.join("checkpoint_bbse_seed1_final.bin")).unwrap();
        assert_eq!(step1, bbse);

        // Events stream: header plus one line per iteration per phase.
        let events = std::fs::read_to_string(out.join("events_dan_lpe_seed1.jsonl")).unwrap();
        assert_eq!(events.lines().count(), 1 + 40 + 40);
        assert!(events.lines().nth(1).unwrap().contains("\"phase\":1"));
        assert!(events.lines().last().unwrap().contains("\"phase\":2"));
        let gamma_lines = events.lines().filter(|l| l.contains("\"j_gamma\"")).count();
        assert_eq!(gamma_lines, 3); // iterations 20, 30, 40 of phase 1

        let paths = cmd_report(&ctx).unwrap();
        let csv = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(csv.lines().count(), 5); // header + 4 method rows
        assert!(csv.contains("runner-test,dan_lpe,"));
        let table = std::fs::read_to_string(&paths[1]).unwrap();
        assert!(table.contains("bbse"));

        let report: crate::eval::ExperimentReport =
            serde_json::from_str(&std::fs::read_to_string(&paths[2]).unwrap()).unwrap();
        assert_eq!(report.seeds, vec![1, 2]);
        assert!(report.prior_gap.unwrap() > 0.0);
        assert!(report.estimate_distance.contains_key(&Method::Bbse));
    }

    #[test]
    fn rerun_reproduces_every_artifact_byte() {
        let out_a = temp_out("bytes_a");
        let out_b = temp_out("bytes_b");
        let mut config = small_config(&out_a);
        config.experiment.seeds = vec![3];
        let ctx_a = RunContext::new(config.clone());
        cmd_train(&ctx_a).unwrap();
        cmd_report(&ctx_a).unwrap();
        // Identical config (so identical hash), writes redirected.
        let ctx_b = RunContext::with_out_dir(config, out_b.clone());
        cmd_train(&ctx_b).unwrap();
        cmd_report(&ctx_b).unwrap();
        let bytes_a = dir_bytes(&out_a);
        let bytes_b = dir_bytes(&out_b);
        assert_eq!(bytes_a.keys().collect::<Vec<_>>(), bytes_b.keys().collect::<Vec<_>>());
        for (name, bytes) in &bytes_a {
            assert_eq!(bytes, &bytes_b[name], "artifact {name} differs between reruns");
        }
    }

    #[test]
    fn report_refuses_foreign_artifacts() {
        let out = temp_out("mixed");
        let mut config = small_config(&out);
        config.experiment.seeds = vec![1];
        config.experiment.methods = vec![Method::Dnn];
        let ctx = RunContext::new(config);
        cmd_train(&ctx).unwrap();

        let path = out.join("train_report_dnn_seed1.json");
        let tampered = std::fs::read_to_string(&path)
            .unwrap()
            .replace(&ctx.hash, &"0".repeat(64));
        std::fs::write(&path, tampered).unwrap();
        let err = cmd_report(&ctx).unwrap_err();
        assert!(matches!(err, Error::ConfigHashMismatch(_)), "got {err}");
    }

    #[test]
    fn generate_writes_loadable_datasets() {
        let out = temp_out("generate");
        let ctx = RunContext::new(small_config(&out));
        let paths = cmd_generate(&ctx).unwrap();
        let source = load_dataset(&paths[0]).unwrap();
        let target = load_dataset(&paths[1]).unwrap();
        let spec = ctx.config.task.synthetic.as_ref().unwrap().to_spec().unwrap();
        let (expect_source, expect_target) = generate_synthetic(&spec).unwrap();
        assert_eq!(source, DatasetFile::Source(expect_source));
        assert_eq!(target, DatasetFile::Target(expect_target));
    }

    #[test]
    fn featurize_labels_and_hides_by_rating() {
        let out = temp_out("featurize");
        let corpus_dir = temp_out("featurize_corpora");
        std::fs::create_dir_all(&corpus_dir).unwrap();
        let source_path = corpus_dir.join("source_corpus.jsonl");
        let target_path = corpus_dir.join("target_corpus.jsonl");
        // One source entity sits inside the rating gap and must vanish.
        std::fs::write(
            &source_path,
            concat!(
                r#"{"id":"s1","rating":4.5,"reviews":["great product works perfectly","love love love"]}"#, "\n",
                r#"{"id":"s2","rating":1.5,"reviews":["terrible product broke instantly"]}"#, "\n",
                r#"{"id":"s3","rating":3.5,"reviews":["average product works okay"]}"#, "\n",
                r#"{"id":"s4","rating":2.0,"reviews":["bad product terrible build"]}"#, "\n",
            ),
        )
        .unwrap();
        std::fs::write(
            &target_path,
            concat!(
                r#"{"id":"t1","rating":5.0,"reviews":["works great love the product"]}"#, "\n",
                r#"{"id":"t2","rating":1.0,"reviews":["broke on arrival terrible"]}"#, "\n",
            ),
        )
        .unwrap();

        let text = format!(
            r#"
            [experiment]
            name = "featurize-test"
            seeds = [1]
            methods = ["dnn"]
            out_dir = "{}"

            [task.files]
            source = "{}"
            target = "{}"

            [task.files.featurize]
            vocab_size = 10
            per_domain_common = 16
            "#,
            out.display(),
            source_path.display(),
            target_path.display(),
        );
        let ctx = RunContext::new(parse_config_str(&text).unwrap());
        let paths = cmd_featurize(&ctx).unwrap();

        let DatasetFile::Source(source) = load_dataset(&paths[0]).unwrap() else {
            panic!("expected a source dataset");
        };
        assert_eq!(source.len(), 3); // gap entity dropped
        assert_eq!(source.labels(), &[0, 1, 1]);

        let DatasetFile::Target(target) = load_dataset(&paths[1]).unwrap() else {
            panic!("expected a target dataset");
        };
        assert_eq!(target.hidden_labels(), Some(&[0, 1][..]));

        let vocab: VocabularyArtifact =
            serde_json::from_str(&std::fs::read_to_string(&paths[2]).unwrap()).unwrap();
        assert_eq!(vocab.config_hash, ctx.hash);
        assert!(vocab.tokens.iter().any(|t| t == "product"));

        // The in-memory path used by train matches the files on disk.
        let data = task_data(&ctx.config).unwrap();
        assert_eq!(&data.source, &source);
        assert_eq!(&data.target, &target);
    }

    #[test]
    fn estimate_runs_from_a_saved_checkpoint() {
        let out = temp_out("estimate");
        let mut config = small_config(&out);
        config.experiment.seeds = vec![1];
        config.experiment.methods = vec![Method::Dnn];
        // Long enough that the saved classifier actually separates.
        config.hyperparams.iterations = Some(200);
        let ctx = RunContext::new(config);
        cmd_train(&ctx).unwrap();

        let checkpoint = out.join("checkpoint_dnn_seed1_best.bin");
        let estimate = cmd_estimate(&ctx, &checkpoint).unwrap();
        assert_eq!(estimate.config_hash, ctx.hash);
        assert_eq!(estimate.gamma_lpe.len(), 2);
        assert!(estimate.lpe_steps > 0);
        assert!(out.join("estimate_standalone.json").exists());
        // A separable task trained to high accuracy gives an estimate
        // near the true shifted prior, far from the source prior.
        let err_beta = crate::eval::l2_distance(
            &estimate.gamma_lpe,
            &SimplexVector::new(vec![0.8, 0.2]).unwrap(),
        )
        .unwrap();
        assert!(err_beta < 0.2, "estimate off by {err_beta}");
    }

    #[test]
    fn commands_reject_the_wrong_task_kind() {
        let out = temp_out("wrong_task");
        let ctx = RunContext::new(small_config(&out));
        let err = cmd_featurize(&ctx).unwrap_err();
        assert!(err.to_string().contains("files task"));

        let text = format!(
            r#"
            [experiment]
            name = "files"
            seeds = [1]
            methods = ["dnn"]
            out_dir = "{}"

            [task.files]
            source = "missing_source.jsonl"
            target = "missing_target.jsonl"
            "#,
            out.display()
        );
        let files_ctx = RunContext::new(parse_config_str(&text).unwrap());
        let err = cmd_generate(&files_ctx).unwrap_err();
        assert!(err.to_string().contains("synthetic task"));
    }
}

//! Training loops for the estimation procedure and its ablations.
//!
//! Every loop shares one skeleton: a trunk/classifier/domain network
//! trained by minibatch Adam, with the domain loss reweighted by a class
//! proportion estimate gamma. The variants differ only in where gamma
//! comes from and whether it moves:
//!
//! * [`step1_train`]: gamma starts uniform and is refit on a schedule
//!   from the classifier's own predictions (the estimation phase).
//! * [`step2_train`]: gamma is frozen at a previously estimated value
//!   and a fresh network trains against it (the correction phase).
//! * [`dann_baseline`]: gamma is pinned to the source prior, which makes
//!   every domain weight exactly one.
//! * [`dnn_baseline`]: source-only training, no adversarial signal.
//!
//! All randomness in a run (the validation split, initialization, batch
//! sampling, dropout) is drawn from one stream seeded by
//! [`HyperParams::seed`], so runs are exactly reproducible.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::distributions::{
    empirical_prior, estimate_joint_confusion, prediction_histogram, row_normalize,
    SimplexVector, GAMMA_FLOOR,
};
use crate::error::{Error, Result};
use crate::lpe::{run_lpe_updates, LpeConfig, LpeState};
use crate::network::loss::{class_loss, class_loss_grad, domain_loss_reweighted_grad};
use crate::network::optimizer::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::network::{backward_with_reversal, forward, predict, Mode, NetworkParameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the reversed domain gradient on the feature trunk.
    pub lambda_d: f64,
    /// Step size for the proportion estimate updates.
    pub lambda_l: f64,
    /// Total minibatch iterations.
    pub iterations: u64,
    /// Iterations before the first proportion update.
    pub warmup: u64,
    /// Proportion update cadence, in iterations.
    pub update_period: u64,
    /// Projected gradient steps applied to gamma per update event.
    pub inner_steps: usize,
    /// Total minibatch size, split evenly between the domains.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Width of the trunk output and the head hidden layers.
    pub hidden: usize,
    /// Master seed for the whole run.
    pub seed: u64,
    /// Validation cadence, in iterations.
    pub eval_period: u64,
    /// Stop after this many evaluations without improvement; 0 disables
    /// early stopping.
    pub patience: usize,
    /// Smallest validation loss decrease that counts as improvement.
    pub min_delta: f64,
    /// Fraction of the source held out for validation.
    pub validation_fraction: f64,
    /// Weight the class loss by inverse source class frequency.
    pub class_weighting: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_d: 0.05,
            lambda_l: 0.01,
            iterations: 8000,
            warmup: 2000,
            update_period: 5,
            inner_steps: 5,
            batch_size: 64,
            learning_rate: 1e-4,
            dropout: 0.6,
            hidden: 32,
            seed: 0,
            eval_period: 100,
            patience: 10,
            min_delta: 1e-4,
            validation_fraction: 0.1,
            class_weighting: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidHyperParams(msg.into()));
        if !self.lambda_d.is_finite() || self.lambda_d < 0.0 {
            return fail("lambda_d must be finite and non-negative");
        }
        if !self.lambda_l.is_finite() || self.lambda_l <= 0.0 {
            return fail("lambda_l must be finite and positive");
        }
        if self.iterations == 0 {
            return fail("iterations must be positive");
        }
        if self.warmup >= self.iterations {
            return fail("warmup must be smaller than iterations");
        }
        if self.update_period == 0 {
            return fail("update_period must be positive");
        }
        if self.inner_steps == 0 {
            return fail("inner_steps must be positive");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return fail("batch_size must be even and at least 2");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail("learning_rate must be finite and positive");
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.hidden == 0 {
            return fail("hidden width must be positive");
        }
        if self.eval_period == 0 {
            return fail("eval_period must be positive");
        }
        if !self.min_delta.is_finite() || self.min_delta < 0.0 {
            return fail("min_delta must be finite and non-negative");
        }
        if !self.validation_fraction.is_finite()
            || !(0.0..1.0).contains(&self.validation_fraction)
            || self.validation_fraction == 0.0
        {
            return fail("validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub iteration: u64,
    pub loss: f64,
}

/// Gamma after one estimation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSnapshot {
    pub iteration: u64,
    pub gamma: SimplexVector,
    /// Moment-matching loss at this gamma.
    pub estimation_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    /// Minibatch class loss per iteration.
    pub class_loss: Vec<f64>,
    /// Minibatch domain loss per iteration; empty without a target.
    pub domain_loss: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
}

/// Everything a run produces except the network weights themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub gamma_final: SimplexVector,
    /// Source prior on the training split.
    pub alpha_tilde: SimplexVector,
    pub curves: LossCurves,
    pub gamma_trajectory: Vec<GammaSnapshot>,
    /// Iteration of the best validation loss; the last iteration if
    /// validation never ran.
    pub best_iteration: u64,
    /// Last iteration executed (smaller than `iterations` only when
    /// early stopping fired).
    pub stopped_at: u64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub summary: TrainSummary,
    /// Weights at the best validation point (final weights if validation
    /// never ran).
    pub best: NetworkParameters,
    /// Weights when the loop ended.
    pub last: NetworkParameters,
}

/// Validation-loss plateau detector. The first observation always counts
/// as an improvement; afterwards a loss must undercut the best seen by
/// at least `min_delta`. Stops once `patience` consecutive observations
/// fail to improve (never stops when `patience` is 0).
#[derive(Debug, Clone)]
pub struct EarlyStopMonitor {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopMonitor {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopMonitor { patience, min_delta, best: None, stale: 0 }
    }

    /// Feeds one validation loss; returns (improved, should_stop).
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some(best) => best - loss >= self.min_delta,
        };
        if improved {
            self.best = Some(loss);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.patience > 0 && self.stale >= self.patience)
    }
}

enum GammaInit {
    Uniform,
    SourcePrior,
    Fixed(SimplexVector),
}

struct LoopSpec<'a> {
    source: &'a LabeledDataset,
    target: Option<&'a UnlabeledDataset>,
    gamma: GammaInit,
    update_gamma: bool,
    hp: &'a HyperParams,
}

/// Attaches the failing iteration to divergence errors surfaced from the
/// numeric layers, which do not know where in the run they are.
fn tag_iteration(err: Error, iteration: u64) -> Error {
    match err {
        Error::Diverged { what, .. } => Error::Diverged { what, iteration },
        other => other,
    }
}

/// Inverse-frequency class weights, normalized to mean one so they
/// rescale the loss without changing its overall magnitude.
fn compute_class_weights(alpha_tilde: &SimplexVector) -> Vec<f64> {
    let raw: Vec<f64> = alpha_tilde.iter().map(|&a| 1.0 / a).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

fn split_with_rng(
    source: &LabeledDataset,
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = source.len();
    if n < 2 {
        return Err(Error::InvalidHyperParams(
            "validation split needs at least two source samples".into(),
        ));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let n_val = ((n as f64 * hp.validation_fraction).floor() as usize).clamp(1, n - 1);
    let (val, train) = indices.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// The train/validation partition a run with these hyperparameters sees.
/// Exposed so callers can evaluate on exactly the rows the loop trained
/// on; the loop itself draws the identical split internally.
pub fn source_split(
    source: &LabeledDataset,
    hp: &HyperParams,
) -> Result<(LabeledDataset, LabeledDataset)> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let (train, val) = split_with_rng(source, hp, &mut rng)?;
    Ok((source.subset(&train), source.subset(&val)))
}

fn train_loop(spec: LoopSpec<'_>) -> Result<TrainReport> {
    let hp = spec.hp;
    hp.validate()?;
    let source = spec.source;
    if source.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if let Some(target) = spec.target {
        if target.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        if target.dim() != source.dim() {
            return Err(Error::DimensionMismatch(format!(
                "source has {} features, target has {}",
                source.dim(),
                target.dim()
            )));
        }
        if target.classes() != source.classes() {
            return Err(Error::DimensionMismatch(format!(
                "source declares {} classes, target declares {}",
                source.classes(),
                target.classes()
            )));
        }
    }
    let classes = source.classes();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let (train_idx, val_idx) = split_with_rng(source, hp, &mut rng)?;
    let train = source.subset(&train_idx);
    let val = source.subset(&val_idx);

    let mut counts = vec![0usize; classes];
    for &y in train.labels() {
        counts[y] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }
    let alpha_tilde = empirical_prior(train.labels(), classes)?;
    let class_weights = hp.class_weighting.then(|| compute_class_weights(&alpha_tilde));

    let gamma_init = match spec.gamma {
        GammaInit::Uniform => SimplexVector::uniform(classes),
        GammaInit::SourcePrior => alpha_tilde.clone(),
        GammaInit::Fixed(gamma) => {
            if gamma.len() != classes {
                return Err(Error::DimensionMismatch(format!(
                    "gamma has {} entries for {classes} classes",
                    gamma.len()
                )));
            }
            gamma
        }
    };
    let mut lpe_state = LpeState::with_gamma(gamma_init);
    let lpe_config = LpeConfig::new(hp.lambda_l, hp.inner_steps)?;

    let mut params =
        NetworkParameters::init(source.dim(), hp.hidden, classes, hp.dropout, rng.next_u64())?;
    let mut optimizer = OptimizerState::new(&params, OptimizerConfig::adam(hp.learning_rate)?)?;

    // Without a target the whole batch is source; with one, half each.
    let half = hp.batch_size / 2;
    let source_rows = if spec.target.is_some() { half } else { hp.batch_size };

    let mut curves = LossCurves::default();
    let mut trajectory = Vec::new();
    let mut monitor = EarlyStopMonitor::new(hp.patience, hp.min_delta);
    let mut best: Option<(u64, NetworkParameters)> = None;
    let mut stopped_at = hp.iterations;

    let mut batch = Array2::zeros((hp.batch_size, source.dim()));
    let mut batch_labels = vec![0usize; source_rows];

    for t in 1..=hp.iterations {
        // Source rows first, then target rows, sampled with replacement.
        for r in 0..source_rows {
            let idx = rng.random_range(0..train.len());
            batch.row_mut(r).assign(&train.features().row(idx));
            batch_labels[r] = train.labels()[idx];
        }
        if let Some(target) = spec.target {
            for r in 0..half {
                let idx = rng.random_range(0..target.len());
                batch.row_mut(source_rows + r).assign(&target.features().row(idx));
            }
        }

        let pass = forward(&params, &batch, Mode::Train, rng.next_u64())
            .map_err(|e| tag_iteration(e, t))?;

        let (j_c, class_grad) = class_loss_grad(
            pass.class_logits.slice(s![..source_rows, ..]),
            &batch_labels,
            class_weights.as_deref(),
        )
        .map_err(|e| tag_iteration(e, t))?;
        let mut d_class = Array2::zeros((hp.batch_size, classes));
        d_class.slice_mut(s![..source_rows, ..]).assign(&class_grad);
        curves.class_loss.push(j_c);

        let mut d_domain = Array2::zeros((hp.batch_size, 2));
        let lambda_d = if spec.target.is_some() { hp.lambda_d } else { 0.0 };
        if spec.target.is_some() {
            let (j_d, d_src, d_tgt) = domain_loss_reweighted_grad(
                pass.domain_logits.slice(s![..half, ..]),
                &batch_labels,
                pass.domain_logits.slice(s![half.., ..]),
                &lpe_state.gamma,
                &alpha_tilde,
            )
            .map_err(|e| tag_iteration(e, t))?;
            d_domain.slice_mut(s![..half, ..]).assign(&d_src);
            d_domain.slice_mut(s![half.., ..]).assign(&d_tgt);
            curves.domain_loss.push(j_d);
        }

        let grads = backward_with_reversal(&params, &pass.cache, &d_class, &d_domain, lambda_d)
            .map_err(|e| tag_iteration(e, t))?;
        optimizer_step(&mut params, &grads, &mut optimizer)
            .map_err(|e| tag_iteration(e, t))?;

        if spec.update_gamma && t > hp.warmup && t % hp.update_period == 0 {
            if let Some(target) = spec.target {
                let train_preds =
                    predict(&params, train.features()).map_err(|e| tag_iteration(e, t))?;
                let target_preds =
                    predict(&params, target.features()).map_err(|e| tag_iteration(e, t))?;
                let joint = estimate_joint_confusion(train.labels(), &train_preds, classes)?;
                let conditional = row_normalize(&joint)?;
                let q_hat = prediction_histogram(&target_preds, classes)?;
                lpe_state = run_lpe_updates(&lpe_state, &lpe_config, &conditional, &q_hat)?;
                trajectory.push(GammaSnapshot {
                    iteration: t,
                    gamma: lpe_state.gamma.clone(),
                    estimation_loss: lpe_state.last_loss,
                });
            }
        }

        if t % hp.eval_period == 0 {
            let val_pass = forward(&params, val.features(), Mode::Eval, 0)
                .map_err(|e| tag_iteration(e, t))?;
            let loss =
                class_loss(val_pass.class_logits.view(), val.labels(), class_weights.as_deref())
                    .map_err(|e| tag_iteration(e, t))?;
            curves.validation.push(ValidationPoint { iteration: t, loss });
            let (improved, stop) = monitor.observe(loss);
            if improved {
                best = Some((t, params.clone()));
            }
            if stop {
                stopped_at = t;
                break;
            }
        }
    }

    let (best_iteration, best_params) = match best {
        Some((t, p)) => (t, p),
        None => (stopped_at, params.clone()),
    };
    Ok(TrainReport {
        summary: TrainSummary {
            gamma_final: lpe_state.gamma.clone(),
            alpha_tilde,
            curves,
            gamma_trajectory: trajectory,
            best_iteration,
            stopped_at,
        },
        best: best_params,
        last: params,
    })
}

/// Estimation phase: adversarial training with gamma refit from the
/// classifier's own predictions, starting from the uniform distribution.
pub fn step1_train(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    hp: &HyperParams,
) -> Result<TrainReport> {
    train_loop(LoopSpec {
        source,
        target: Some(target),
        gamma: GammaInit::Uniform,
        update_gamma: true,
        hp,
    })
}

/// [`step1_train`] starting from a caller-supplied estimate instead of
/// uniform.
pub fn step1_train_with_init(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    gamma_init: SimplexVector,
    hp: &HyperParams,
) -> Result<TrainReport> {
    gamma_init.require_floor(GAMMA_FLOOR)?;
    train_loop(LoopSpec {
        source,
        target: Some(target),
        gamma: GammaInit::Fixed(gamma_init),
        update_gamma: true,
        hp,
    })
}

/// Correction phase: a fresh network trained against a frozen estimate.
pub fn step2_train(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    gamma: &SimplexVector,
    hp: &HyperParams,
) -> Result<TrainReport> {
    gamma.require_floor(GAMMA_FLOOR)?;
    train_loop(LoopSpec {
        source,
        target: Some(target),
        gamma: GammaInit::Fixed(gamma.clone()),
        update_gamma: false,
        hp,
    })
}

/// Adversarial baseline: gamma pinned to the source prior, so the domain
/// loss weights are all exactly one.
pub fn dann_baseline(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    hp: &HyperParams,
) -> Result<TrainReport> {
    train_loop(LoopSpec {
        source,
        target: Some(target),
        gamma: GammaInit::SourcePrior,
        update_gamma: false,
        hp,
    })
}

/// Source-only baseline: full batches of source data, no domain signal.
pub fn dnn_baseline(source: &LabeledDataset, hp: &HyperParams) -> Result<TrainReport> {
    train_loop(LoopSpec {
        source,
        target: None,
        gamma: GammaInit::SourcePrior,
        update_gamma: false,
        hp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{axis_aligned_means, generate_synthetic, SyntheticSpec};
    use crate::eval::accuracy;
    use approx::assert_relative_eq;

    fn spec(n_source: usize, n_target: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            classes: 2,
            dim: 2,
            class_means: axis_aligned_means(2, 2, 3.0).unwrap(),
            covariance_scale: 0.4,
            alpha: SimplexVector::new(vec![0.5, 0.5]).unwrap(),
            beta: SimplexVector::new(vec![0.8, 0.2]).unwrap(),
            n_source,
            n_target,
            seed,
        }
    }

    fn quick_hp() -> HyperParams {
        HyperParams {
            iterations: 60,
            warmup: 20,
            update_period: 10,
            batch_size: 16,
            learning_rate: 1e-2,
            dropout: 0.0,
            hidden: 8,
            eval_period: 20,
            patience: 0,
            validation_fraction: 0.2,
            ..HyperParams::default()
        }
    }

    #[test]
    fn hyperparams_validation_catches_each_knob() {
        let base = HyperParams::default();
        assert!(base.validate().is_ok());
        let cases: Vec<HyperParams> = vec![
            HyperParams { lambda_d: -0.1, ..base.clone() },
            HyperParams { lambda_d: f64::NAN, ..base.clone() },
            HyperParams { lambda_l: 0.0, ..base.clone() },
            HyperParams { iterations: 0, ..base.clone() },
            HyperParams { warmup: 8000, ..base.clone() },
            HyperParams { update_period: 0, ..base.clone() },
            HyperParams { inner_steps: 0, ..base.clone() },
            HyperParams { batch_size: 7, ..base.clone() },
            HyperParams { batch_size: 0, ..base.clone() },
            HyperParams { learning_rate: 0.0, ..base.clone() },
            HyperParams { dropout: 1.0, ..base.clone() },
            HyperParams { hidden: 0, ..base.clone() },
            HyperParams { eval_period: 0, ..base.clone() },
            HyperParams { min_delta: -1.0, ..base.clone() },
            HyperParams { validation_fraction: 0.0, ..base.clone() },
            HyperParams { validation_fraction: 1.0, ..base.clone() },
        ];
        for (i, hp) in cases.iter().enumerate() {
            assert!(
                matches!(hp.validate(), Err(Error::InvalidHyperParams(_))),
                "case {i} should fail validation"
            );
        }
    }

    #[test]
    fn early_stop_monitor_hand_traces() {
        // Best at the second observation, then two stale evals hit the
        // patience of 2 at the fourth.
        let mut monitor = EarlyStopMonitor::new(2, 1e-4);
        let losses = [1.0, 0.9, 0.95, 0.96, 0.97];
        let mut stopped_at = None;
        let mut best_at = 0;
        for (i, &loss) in losses.iter().enumerate() {
            let (improved, stop) = monitor.observe(loss);
            if improved {
                best_at = i;
            }
            if stop {
                stopped_at = Some(i);
                break;
            }
        }
        assert_eq!(best_at, 1);
        assert_eq!(stopped_at, Some(3));

        // A constant loss never beats min_delta, so patience 1 stops at
        // the second observation.
        let mut monitor = EarlyStopMonitor::new(1, 1e-4);
        assert_eq!(monitor.observe(0.5), (true, false));
        assert_eq!(monitor.observe(0.5), (false, true));

        // Patience 0 tracks the best but never stops.
        let mut monitor = EarlyStopMonitor::new(0, 1e-4);
        for _ in 0..100 {
            assert!(!monitor.observe(0.5).1);
        }
    }

    #[test]
    fn source_split_partitions_the_rows() {
        let (source, _) = generate_synthetic(&spec(50, 10, 3)).unwrap();
        let hp = quick_hp();
        let (train, val) = source_split(&source, &hp).unwrap();
        assert_eq!(val.len(), 10);
        assert_eq!(train.len(), 40);
        // Same seed gives the same split.
        let (train2, _) = source_split(&source, &hp).unwrap();
        assert_eq!(train.labels(), train2.labels());
        assert_eq!(train.features(), train2.features());
        // Different seed moves it.
        let other = HyperParams { seed: 9, ..hp };
        let (train3, _) = source_split(&source, &other).unwrap();
        assert_ne!(train.features(), train3.features());
    }

    #[test]
    fn loop_uses_the_public_split() {
        let (source, _) = generate_synthetic(&spec(80, 10, 5)).unwrap();
        let hp = quick_hp();
        let report = dnn_baseline(&source, &hp).unwrap();
        let (train, _) = source_split(&source, &hp).unwrap();
        let prior = empirical_prior(train.labels(), 2).unwrap();
        assert_eq!(report.summary.alpha_tilde.as_slice(), prior.as_slice());
    }

    #[test]
    fn missing_train_class_is_rejected() {
        // Class 2 exists in the schema but never in the data.
        let features = Array2::from_shape_fn((20, 2), |(i, j)| (i + j) as f64);
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let source = LabeledDataset::new(features, labels, 3).unwrap();
        let err = dnn_baseline(&source, &quick_hp()).unwrap_err();
        assert!(matches!(err, Error::MissingClass { class: 2 }));
    }

    #[test]
    fn dnn_baseline_fits_separable_clusters() {
        let (source, _) = generate_synthetic(&spec(160, 10, 11)).unwrap();
        let hp = HyperParams { iterations: 200, ..quick_hp() };
        let report = dnn_baseline(&source, &hp).unwrap();
        let (train, _) = source_split(&source, &hp).unwrap();
        let preds = predict(&report.last, train.features()).unwrap();
        let acc = accuracy(train.labels(), &preds).unwrap();
        assert!(acc > 0.9, "train accuracy {acc} too low for separable data");
        assert_eq!(report.summary.curves.class_loss.len(), 200);
        assert!(report.summary.curves.domain_loss.is_empty());
        // Loss should have dropped substantially from the ln(2) start.
        let early: f64 = report.summary.curves.class_loss[..10].iter().sum::<f64>() / 10.0;
        let late: f64 =
            report.summary.curves.class_loss[190..].iter().sum::<f64>() / 10.0;
        assert!(late < early / 2.0, "class loss {early} -> {late} did not descend");
    }

    #[test]
    fn frozen_source_prior_gamma_matches_dann_exactly() {
        let (source, target) = generate_synthetic(&spec(60, 60, 17)).unwrap();
        let hp = HyperParams { iterations: 40, ..quick_hp() };
        let dann = dann_baseline(&source, &target, &hp).unwrap();
        let frozen =
            step2_train(&source, &target, &dann.summary.alpha_tilde, &hp).unwrap();
        // Same seed, same gamma, same schedule: every float matches.
        assert_eq!(dann.last, frozen.last);
        assert_eq!(dann.best, frozen.best);
        assert_eq!(dann.summary.curves, frozen.summary.curves);
        assert!(dann.summary.gamma_trajectory.is_empty());
        assert!(frozen.summary.gamma_trajectory.is_empty());
    }

    #[test]
    fn gamma_updates_follow_the_schedule() {
        let (source, target) = generate_synthetic(&spec(60, 60, 23)).unwrap();
        let hp = HyperParams {
            iterations: 30,
            warmup: 10,
            update_period: 10,
            eval_period: 100,
            ..quick_hp()
        };
        let report = step1_train(&source, &target, &hp).unwrap();
        let at: Vec<u64> =
            report.summary.gamma_trajectory.iter().map(|s| s.iteration).collect();
        assert_eq!(at, vec![20, 30]);
        for snapshot in &report.summary.gamma_trajectory {
            assert!(snapshot.gamma.min_entry() >= GAMMA_FLOOR * (1.0 - 1e-9));
            assert!(snapshot.estimation_loss.is_finite());
        }
        assert_eq!(
            report.summary.gamma_final.as_slice(),
            report.summary.gamma_trajectory.last().unwrap().gamma.as_slice()
        );
        // Validation never ran, so the best checkpoint is the last.
        assert_eq!(report.summary.best_iteration, 30);
        assert_eq!(report.summary.stopped_at, 30);
    }

    #[test]
    fn early_stopping_keeps_the_best_checkpoint() {
        let (source, _) = generate_synthetic(&spec(60, 10, 29)).unwrap();
        // An unreachable min_delta means only the first evaluation
        // improves; patience 1 then stops at the second.
        let hp = HyperParams {
            iterations: 200,
            eval_period: 25,
            patience: 1,
            min_delta: 1e18,
            ..quick_hp()
        };
        let report = dnn_baseline(&source, &hp).unwrap();
        assert_eq!(report.summary.stopped_at, 50);
        assert_eq!(report.summary.best_iteration, 25);
        assert_eq!(report.summary.curves.validation.len(), 2);
        assert_eq!(report.summary.curves.class_loss.len(), 50);
        assert_ne!(report.best, report.last);
    }

    #[test]
    fn divergence_reports_the_iteration() {
        let (source, target) = generate_synthetic(&spec(40, 40, 31)).unwrap();
        let hp =
            HyperParams { learning_rate: 1e305, iterations: 10, warmup: 2, ..quick_hp() };
        let err = step1_train(&source, &target, &hp).unwrap_err();
        match err {
            Error::Diverged { iteration, .. } => assert!(iteration >= 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn step2_rejects_gamma_below_floor() {
        let (source, target) = generate_synthetic(&spec(40, 40, 37)).unwrap();
        let gamma = SimplexVector::new(vec![1.0, 0.0]).unwrap();
        let err = step2_train(&source, &target, &gamma, &quick_hp()).unwrap_err();
        assert!(matches!(err, Error::ZeroEntry { .. }));
    }

    #[test]
    fn class_weights_invert_frequencies() {
        let alpha = SimplexVector::new(vec![0.8, 0.2]).unwrap();
        let weights = compute_class_weights(&alpha);
        assert_relative_eq!(weights[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(weights[1], 1.6, epsilon = 1e-12);
        let mean = weights.iter().sum::<f64>() / 2.0;
        assert_relative_eq!(mean, 1.0, epsilon = 1e-12);
    }
}

//! Feedforward network with a shared feature trunk and two heads.
//!
//! The feature extractor feeds both a class head and a domain head. During
//! backprop the feature trunk receives the class-head gradient minus
//! `lambda_d` times the domain-head gradient, which is the gradient
//! reversal that drives the trunk toward domain-invariant features while
//! the domain head itself is trained to discriminate.
//!
//! Backprop is written out by hand against caches captured in the forward
//! pass. Hidden layers are ReLU with inverted dropout; head outputs are
//! raw logits.

pub mod checkpoint;
pub mod loss;
pub mod optimizer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{
    class_loss, class_loss_grad, domain_loss_reweighted, domain_loss_reweighted_grad,
    BatchWeights,
};
pub use optimizer::{optimizer_step, OptimizerConfig, OptimizerState};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The domain head always discriminates source vs target.
pub const DOMAIN_CLASSES: usize = 2;

/// One dense layer; `weights` is `output x input` and the forward map is
/// `x W^T + b` on row-major batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn init(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        let weights =
            Array2::from_shape_fn((output, input), |_| rng.random_range(-scale..scale));
        DenseLayer { weights, bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.bias.iter().all(|b| b.is_finite())
    }
}

/// All trainable parameters: the feature trunk and the two heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParameters {
    pub feature: Vec<DenseLayer>,
    pub classifier: Vec<DenseLayer>,
    pub domain: Vec<DenseLayer>,
    /// Dropout rate applied after every hidden ReLU during training.
    pub dropout: f64,
}

impl NetworkParameters {
    /// The standard topology: one hidden trunk layer, one hidden layer per
    /// head. `seed` drives the uniform `1/sqrt(fan_in)` initialization.
    pub fn init(
        input: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::from_layer_dims(
            &[input, hidden],
            &[hidden, hidden, classes],
            &[hidden, hidden, DOMAIN_CLASSES],
            dropout,
            seed,
        )
    }

    /// General constructor over explicit layer widths. `feature_dims`
    /// starts at the input width; both head dim lists must start at the
    /// trunk's output width, and the domain head must end at 2.
    pub fn from_layer_dims(
        feature_dims: &[usize],
        classifier_dims: &[usize],
        domain_dims: &[usize],
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if feature_dims.len() < 2 || classifier_dims.len() < 2 || domain_dims.len() < 2 {
            return Err(Error::DimensionMismatch(
                "every branch needs at least one layer".into(),
            ));
        }
        if feature_dims.iter().any(|&d| d == 0)
            || classifier_dims.iter().any(|&d| d == 0)
            || domain_dims.iter().any(|&d| d == 0)
        {
            return Err(Error::DimensionMismatch("zero layer width".into()));
        }
        let trunk_out = *feature_dims.last().unwrap();
        if classifier_dims[0] != trunk_out || domain_dims[0] != trunk_out {
            return Err(Error::DimensionMismatch(format!(
                "heads must read the {trunk_out}-wide trunk output"
            )));
        }
        if *domain_dims.last().unwrap() != DOMAIN_CLASSES {
            return Err(Error::DimensionMismatch(format!(
                "domain head must end at {DOMAIN_CLASSES} logits"
            )));
        }
        if !dropout.is_finite() || !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidHyperParams(format!(
                "dropout must lie in [0, 1), got {dropout}"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let build = |rng: &mut ChaCha8Rng, dims: &[usize]| {
            dims.windows(2).map(|w| DenseLayer::init(rng, w[0], w[1])).collect::<Vec<_>>()
        };
        Ok(NetworkParameters {
            feature: build(&mut rng, feature_dims),
            classifier: build(&mut rng, classifier_dims),
            domain: build(&mut rng, domain_dims),
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.feature[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature.last().unwrap().output_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.last().unwrap().output_dim()
    }

    /// Re-checks the structural invariants, used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.feature.is_empty() || self.classifier.is_empty() || self.domain.is_empty() {
            return Err(Error::DimensionMismatch("empty branch".into()));
        }
        let chain = |layers: &[DenseLayer], from: usize, name: &str| -> Result<usize> {
            let mut width = from;
            for layer in layers {
                if layer.input_dim() != width {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} layer expects {width} inputs, has {}",
                        layer.input_dim()
                    )));
                }
                if layer.bias.len() != layer.output_dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} bias length {} vs {} outputs",
                        layer.bias.len(),
                        layer.output_dim()
                    )));
                }
                if !layer.is_finite() {
                    return Err(Error::NonFinite("network parameters"));
                }
                width = layer.output_dim();
            }
            Ok(width)
        };
        let trunk_out = chain(&self.feature, self.input_dim(), "feature")?;
        chain(&self.classifier, trunk_out, "classifier")?;
        let domain_out = chain(&self.domain, trunk_out, "domain")?;
        if domain_out != DOMAIN_CLASSES {
            return Err(Error::DimensionMismatch(format!(
                "domain head ends at {domain_out} logits, expected {DOMAIN_CLASSES}"
            )));
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidHyperParams(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
struct BranchCache {
    /// Input to each layer, after the previous layer's dropout.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    preacts: Vec<Array2<f64>>,
    /// Inverted-dropout scale masks (0 or `1/(1-p)`), `None` where no
    /// dropout was applied.
    masks: Vec<Option<Array2<f64>>>,
}

/// Intermediate activations captured for backprop.
#[derive(Debug)]
pub struct ForwardCache {
    feature: BranchCache,
    classifier: BranchCache,
    domain: BranchCache,
    batch: usize,
}

#[derive(Debug)]
pub struct ForwardPass {
    /// Trunk output, one row per sample.
    pub features: Array2<f64>,
    pub class_logits: Array2<f64>,
    pub domain_logits: Array2<f64>,
    pub cache: ForwardCache,
}

fn run_branch(
    layers: &[DenseLayer],
    input: Array2<f64>,
    last_is_linear: bool,
    dropout: f64,
    rng: &mut Option<ChaCha8Rng>,
) -> (BranchCache, Array2<f64>) {
    let mut cache = BranchCache {
        inputs: Vec::with_capacity(layers.len()),
        preacts: Vec::with_capacity(layers.len()),
        masks: Vec::with_capacity(layers.len()),
    };
    let mut x = input;
    for (li, layer) in layers.iter().enumerate() {
        let pre = x.dot(&layer.weights.t()) + &layer.bias;
        cache.inputs.push(x);
        let output_layer = last_is_linear && li == layers.len() - 1;
        if output_layer {
            cache.masks.push(None);
            x = pre.clone();
        } else {
            let activated = pre.mapv(|v| v.max(0.0));
            let mask = rng.as_mut().map(|rng| {
                let keep = 1.0 - dropout;
                Array2::from_shape_fn(activated.raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            });
            x = match &mask {
                Some(m) => activated * m,
                None => activated,
            };
            cache.masks.push(mask);
        }
        cache.preacts.push(pre);
    }
    (cache, x)
}

/// Runs the network on a batch (rows are samples). In [`Mode::Train`] with
/// a positive dropout rate, masks are drawn from a `ChaCha8` stream seeded
/// with `dropout_seed`; [`Mode::Eval`] applies no dropout and ignores the
/// seed.
pub fn forward(
    params: &NetworkParameters,
    inputs: &Array2<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<ForwardPass> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} columns, network expects {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    if inputs.nrows() == 0 {
        return Err(Error::EmptySampleSet);
    }
    // ReLU maps NaN to zero, so bad inputs would otherwise pass through
    // the logit check below unnoticed.
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input batch"));
    }
    let mut rng = match mode {
        Mode::Train if params.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
        _ => None,
    };
    let (feature_cache, features) =
        run_branch(&params.feature, inputs.clone(), false, params.dropout, &mut rng);
    let (class_cache, class_logits) =
        run_branch(&params.classifier, features.clone(), true, params.dropout, &mut rng);
    let (domain_cache, domain_logits) =
        run_branch(&params.domain, features.clone(), true, params.dropout, &mut rng);

    if class_logits.iter().any(|v| !v.is_finite())
        || domain_logits.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Diverged { what: "activations", iteration: 0 });
    }
    Ok(ForwardPass {
        features,
        class_logits,
        domain_logits,
        cache: ForwardCache {
            feature: feature_cache,
            classifier: class_cache,
            domain: domain_cache,
            batch: inputs.nrows(),
        },
    })
}

/// Gradients (or any per-parameter tensors) shaped exactly like
/// [`NetworkParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub feature: Vec<LayerGrads>,
    pub classifier: Vec<LayerGrads>,
    pub domain: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Gradients {
    /// All-zero tensors matching `params`, used to seed optimizer moments.
    pub fn zeros_like(params: &NetworkParameters) -> Self {
        let zero = |layers: &[DenseLayer]| {
            layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect()
        };
        Gradients {
            feature: zero(&params.feature),
            classifier: zero(&params.classifier),
            domain: zero(&params.domain),
        }
    }

    pub fn is_finite(&self) -> bool {
        let ok = |layers: &[LayerGrads]| {
            layers.iter().all(|l| {
                l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
            })
        };
        ok(&self.feature) && ok(&self.classifier) && ok(&self.domain)
    }
}

fn branch_backward(
    layers: &[DenseLayer],
    cache: &BranchCache,
    d_output: Array2<f64>,
    last_is_linear: bool,
) -> (Vec<LayerGrads>, Array2<f64>) {
    let mut grads = Vec::with_capacity(layers.len());
    let mut d = d_output;
    for (li, layer) in layers.iter().enumerate().rev() {
        let output_layer = last_is_linear && li == layers.len() - 1;
        if !output_layer {
            if let Some(mask) = &cache.masks[li] {
                d = d * mask;
            }
            d = d * &cache.preacts[li].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        }
        let d_weights = d.t().dot(&cache.inputs[li]);
        let d_bias = d.sum_axis(Axis(0));
        let d_input = d.dot(&layer.weights);
        grads.push(LayerGrads { weights: d_weights, bias: d_bias });
        d = d_input;
    }
    grads.reverse();
    (grads, d)
}

fn check_cache_branch(
    layers: &[DenseLayer],
    cache: &BranchCache,
    batch: usize,
    name: &str,
) -> Result<()> {
    if cache.inputs.len() != layers.len() || cache.preacts.len() != layers.len() {
        return Err(Error::StaleCache(format!(
            "{name} cache covers {} layers, parameters have {}",
            cache.inputs.len(),
            layers.len()
        )));
    }
    for (li, layer) in layers.iter().enumerate() {
        let input = &cache.inputs[li];
        let pre = &cache.preacts[li];
        if input.nrows() != batch
            || input.ncols() != layer.input_dim()
            || pre.ncols() != layer.output_dim()
        {
            return Err(Error::StaleCache(format!(
                "{name} layer {li} cached {}x{} -> {} but parameters are {} -> {}",
                input.nrows(),
                input.ncols(),
                pre.ncols(),
                layer.input_dim(),
                layer.output_dim()
            )));
        }
    }
    Ok(())
}

/// Backprop through both heads and the trunk.
///
/// `d_class_logits` and `d_domain_logits` are the loss gradients at the
/// two heads' outputs. The trunk sees the class-head pull minus
/// `lambda_d` times the domain-head pull; the domain head's own
/// parameters get their ordinary unreversed gradient.
pub fn backward_with_reversal(
    params: &NetworkParameters,
    cache: &ForwardCache,
    d_class_logits: &Array2<f64>,
    d_domain_logits: &Array2<f64>,
    lambda_d: f64,
) -> Result<Gradients> {
    if !lambda_d.is_finite() {
        return Err(Error::NonFinite("lambda_d"));
    }
    check_cache_branch(&params.feature, &cache.feature, cache.batch, "feature")?;
    check_cache_branch(&params.classifier, &cache.classifier, cache.batch, "classifier")?;
    check_cache_branch(&params.domain, &cache.domain, cache.batch, "domain")?;
    let batch = cache.batch;
    if d_class_logits.dim() != (batch, params.classes()) {
        return Err(Error::DimensionMismatch(format!(
            "class logit gradient is {:?}, expected ({batch}, {})",
            d_class_logits.dim(),
            params.classes()
        )));
    }
    if d_domain_logits.dim() != (batch, DOMAIN_CLASSES) {
        return Err(Error::DimensionMismatch(format!(
            "domain logit gradient is {:?}, expected ({batch}, {DOMAIN_CLASSES})",
            d_domain_logits.dim()
        )));
    }

    let (class_grads, d_feat_class) =
        branch_backward(&params.classifier, &cache.classifier, d_class_logits.clone(), true);
    let (domain_grads, d_feat_domain) =
        branch_backward(&params.domain, &cache.domain, d_domain_logits.clone(), true);
    let d_features = d_feat_class - lambda_d * &d_feat_domain;
    let (feature_grads, _) =
        branch_backward(&params.feature, &cache.feature, d_features, false);

    Ok(Gradients { feature: feature_grads, classifier: class_grads, domain: domain_grads })
}

/// Class predictions for a batch: argmax over class logits in eval mode.
/// Ties resolve to the lowest class index.
pub fn predict(params: &NetworkParameters, inputs: &Array2<f64>) -> Result<Vec<usize>> {
    let pass = forward(params, inputs, Mode::Eval, 0)?;
    Ok(argmax_rows(&pass.class_logits.view()))
}

/// Row-wise argmax with ties resolved toward the lowest index.
pub fn argmax_rows(logits: &ArrayView2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tiny_params(seed: u64, dropout: f64) -> NetworkParameters {
        NetworkParameters::init(3, 4, 2, dropout, seed).unwrap()
    }

    #[test]
    fn init_produces_consistent_dims() {
        let p = tiny_params(7, 0.0);
        assert_eq!(p.input_dim(), 3);
        assert_eq!(p.feature_dim(), 4);
        assert_eq!(p.classes(), 2);
        p.validate().unwrap();
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        let a = tiny_params(42, 0.5);
        let b = tiny_params(42, 0.5);
        assert_eq!(a, b);
        let c = tiny_params(43, 0.5);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_fan_in_scale() {
        let p = NetworkParameters::init(100, 16, 3, 0.0, 1).unwrap();
        let bound = 1.0 / (100f64).sqrt();
        assert!(p.feature[0].weights.iter().all(|w| w.abs() <= bound));
        // Biases start at zero.
        assert!(p.feature[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_shapes_and_eval_determinism() {
        let p = tiny_params(1, 0.5);
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let a = forward(&p, &x, Mode::Eval, 11).unwrap();
        let b = forward(&p, &x, Mode::Eval, 99).unwrap();
        assert_eq!(a.class_logits.dim(), (2, 2));
        assert_eq!(a.domain_logits.dim(), (2, 2));
        assert_eq!(a.features.dim(), (2, 4));
        // Eval ignores the dropout seed entirely.
        assert_eq!(a.class_logits, b.class_logits);
    }

    #[test]
    fn train_mode_dropout_is_seeded() {
        let p = tiny_params(1, 0.5);
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let a = forward(&p, &x, Mode::Train, 5).unwrap();
        let b = forward(&p, &x, Mode::Train, 5).unwrap();
        assert_eq!(a.class_logits, b.class_logits);
        let c = forward(&p, &x, Mode::Train, 6).unwrap();
        assert_ne!(a.class_logits, c.class_logits);
    }

    #[test]
    fn forward_without_dropout_matches_manual_computation() {
        // One feature layer 2 -> 2, heads 2 -> 2, all weights hand-set.
        let mut p = NetworkParameters::from_layer_dims(
            &[2, 2],
            &[2, 2],
            &[2, 2],
            0.0,
            0,
        )
        .unwrap();
        p.feature[0].weights = array![[1.0, 0.0], [0.0, -1.0]];
        p.feature[0].bias = array![0.0, 0.5];
        p.classifier[0].weights = array![[1.0, 1.0], [0.0, 2.0]];
        p.classifier[0].bias = array![0.1, -0.1];
        p.domain[0].weights = array![[1.0, 0.0], [0.0, 1.0]];
        p.domain[0].bias = array![0.0, 0.0];

        let x = array![[2.0, 1.0]];
        let pass = forward(&p, &x, Mode::Eval, 0).unwrap();
        // Trunk pre-activation: (2.0, -1.0 + 0.5) = (2.0, -0.5); ReLU: (2.0, 0.0).
        assert_eq!(pass.features, array![[2.0, 0.0]]);
        // Class head: (2.0 + 0.0 + 0.1, 0.0 - 0.1).
        assert_abs_diff_eq!(pass.class_logits[[0, 0]], 2.1, epsilon = 1e-15);
        assert_abs_diff_eq!(pass.class_logits[[0, 1]], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width_and_empty_batches() {
        let p = tiny_params(1, 0.0);
        let narrow = array![[0.1, 0.2]];
        assert!(forward(&p, &narrow, Mode::Eval, 0).is_err());
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(forward(&p, &empty, Mode::Eval, 0), Err(Error::EmptySampleSet)));
    }

    #[test]
    fn forward_rejects_non_finite_inputs() {
        let p = tiny_params(1, 0.0);
        let x = array![[f64::NAN, 0.0, 0.0]];
        assert!(matches!(forward(&p, &x, Mode::Eval, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn forward_flags_overflowing_activations_as_divergence() {
        // Weights large enough to overflow f64 in the first matmul.
        let mut p =
            NetworkParameters::from_layer_dims(&[1, 1], &[1, 2], &[1, 2], 0.0, 0).unwrap();
        p.feature[0].weights = array![[1e308]];
        p.classifier[0].weights = array![[1e308], [1e308]];
        let x = array![[10.0]];
        let err = forward(&p, &x, Mode::Eval, 0).unwrap_err();
        assert!(err.to_string().starts_with("diverged"));
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let p = tiny_params(1, 0.0);
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let pass = forward(&p, &x, Mode::Train, 0).unwrap();
        let other = NetworkParameters::init(3, 5, 2, 0.0, 2).unwrap();
        let dc = Array2::zeros((2, 2));
        let dd = Array2::zeros((2, 2));
        let err = backward_with_reversal(&other, &pass.cache, &dc, &dd, 0.1).unwrap_err();
        assert!(matches!(err, Error::StaleCache(_)));
    }

    #[test]
    fn zero_lambda_equals_uncoupled_backprop_exactly() {
        // With lambda_d = 0 the trunk must see exactly the class-head
        // gradient; compare bit for bit against a composition of the two
        // branch backprops with no coupling at all.
        let p = tiny_params(3, 0.0);
        let x = array![[0.3, -0.4, 0.9], [-0.2, 0.8, 0.1], [0.5, 0.5, 0.5]];
        let pass = forward(&p, &x, Mode::Eval, 0).unwrap();
        let dc = Array2::from_shape_fn((3, 2), |(i, j)| 0.1 * (i as f64) - 0.05 * (j as f64));
        let dd = Array2::from_shape_fn((3, 2), |(i, j)| 0.2 * (j as f64) + 0.03 * (i as f64));

        let coupled = backward_with_reversal(&p, &pass.cache, &dc, &dd, 0.0).unwrap();

        let (class_grads, d_feat) =
            branch_backward(&p.classifier, &pass.cache.classifier, dc.clone(), true);
        let (domain_grads, _) =
            branch_backward(&p.domain, &pass.cache.domain, dd.clone(), true);
        let (feature_grads, _) =
            branch_backward(&p.feature, &pass.cache.feature, d_feat, false);

        assert_eq!(coupled.feature, feature_grads);
        assert_eq!(coupled.classifier, class_grads);
        assert_eq!(coupled.domain, domain_grads);
    }

    #[test]
    fn domain_pull_on_the_trunk_is_linear_in_lambda() {
        let p = tiny_params(3, 0.0);
        let x = array![[0.3, -0.4, 0.9], [-0.2, 0.8, 0.1], [0.5, 0.5, 0.5]];
        let pass = forward(&p, &x, Mode::Eval, 0).unwrap();
        let dc = Array2::from_shape_fn((3, 2), |(i, j)| 0.1 * (i as f64) - 0.05 * (j as f64));
        let dd = Array2::from_shape_fn((3, 2), |(i, j)| 0.2 * (j as f64) + 0.03 * (i as f64));

        let plus = backward_with_reversal(&p, &pass.cache, &dc, &dd, 1.0).unwrap();
        let minus = backward_with_reversal(&p, &pass.cache, &dc, &dd, -1.0).unwrap();
        let zero = backward_with_reversal(&p, &pass.cache, &dc, &dd, 0.0).unwrap();
        let double = backward_with_reversal(&p, &pass.cache, &dc, &dd, 2.0).unwrap();

        for li in 0..p.feature.len() {
            let w_plus = &plus.feature[li].weights;
            let w_minus = &minus.feature[li].weights;
            let w_zero = &zero.feature[li].weights;
            let w_double = &double.feature[li].weights;
            // Negating lambda mirrors the domain pull around the zero run.
            let mean = (w_plus + w_minus) / 2.0;
            for (a, b) in mean.iter().zip(w_zero.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            // Doubling lambda doubles the pull.
            let twice = w_zero + &((w_plus - w_zero) * 2.0);
            for (a, b) in w_double.iter().zip(twice.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
        // Head gradients are untouched by lambda.
        assert_eq!(plus.domain, minus.domain);
        assert_eq!(plus.classifier, zero.classifier);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let logits = array![[1.0, 1.0, 0.5], [0.2, 0.9, 0.9]];
        assert_eq!(argmax_rows(&logits.view()), vec![0, 1]);
    }
}

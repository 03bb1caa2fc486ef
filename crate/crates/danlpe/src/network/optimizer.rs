//! Adam with bias correction, applied in place.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, LayerGrads, NetworkParameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    /// Standard Adam moments with the given learning rate.
    pub fn adam(learning_rate: f64) -> Result<Self> {
        let config = OptimizerConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidHyperParams(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl OptimizerState {
    pub fn new(params: &NetworkParameters, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            step: 0,
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
        })
    }
}

fn update_tensor2(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    config: &OptimizerConfig,
    bc1: f64,
    bc2: f64,
) -> Result<()> {
    if param.raw_dim() != grad.raw_dim() {
        return Err(Error::DimensionMismatch(format!(
            "gradient {:?} vs parameter {:?}",
            grad.raw_dim(),
            param.raw_dim()
        )));
    }
    ndarray::Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        *p -= config.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + config.epsilon);
    });
    Ok(())
}

fn update_tensor1(
    param: &mut Array1<f64>,
    grad: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    config: &OptimizerConfig,
    bc1: f64,
    bc2: f64,
) -> Result<()> {
    if param.len() != grad.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient length {} vs parameter length {}",
            grad.len(),
            param.len()
        )));
    }
    ndarray::Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        *p -= config.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + config.epsilon);
    });
    Ok(())
}

/// One Adam step over every parameter tensor. Rejects non-finite
/// gradients before touching any state, so a failed step leaves both the
/// parameters and the moments untouched.
pub fn optimizer_step(
    params: &mut NetworkParameters,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Diverged { what: "gradient", iteration: state.step });
    }
    let branch_lens = |g: &Gradients| (g.feature.len(), g.classifier.len(), g.domain.len());
    if branch_lens(grads)
        != (params.feature.len(), params.classifier.len(), params.domain.len())
    {
        return Err(Error::DimensionMismatch("gradient branch layout".into()));
    }

    let t = state.step + 1;
    let bc1 = 1.0 - state.config.beta1.powi(t as i32);
    let bc2 = 1.0 - state.config.beta2.powi(t as i32);
    let config = state.config;

    let apply = |layers: &mut [super::DenseLayer],
                     grads: &[LayerGrads],
                     m: &mut [LayerGrads],
                     v: &mut [LayerGrads]|
     -> Result<()> {
        for (((layer, grad), m), v) in layers.iter_mut().zip(grads).zip(m).zip(v) {
            update_tensor2(
                &mut layer.weights,
                &grad.weights,
                &mut m.weights,
                &mut v.weights,
                &config,
                bc1,
                bc2,
            )?;
            update_tensor1(
                &mut layer.bias,
                &grad.bias,
                &mut m.bias,
                &mut v.bias,
                &config,
                bc1,
                bc2,
            )?;
        }
        Ok(())
    };
    apply(
        &mut params.feature,
        &grads.feature,
        &mut state.first_moment.feature,
        &mut state.second_moment.feature,
    )?;
    apply(
        &mut params.classifier,
        &grads.classifier,
        &mut state.first_moment.classifier,
        &mut state.second_moment.classifier,
    )?;
    apply(
        &mut params.domain,
        &grads.domain,
        &mut state.first_moment.domain,
        &mut state.second_moment.domain,
    )?;
    state.step = t;
    Ok(())
}

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hyperparameters for [`adam_step`]. Weight decay is the coupled L2 form:
/// `weight_decay · param` is added to the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// Per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            step: 0,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
        }
    }

    /// In-place form of [`adam_step`]; identical arithmetic.
    pub fn update(&mut self, param: &mut Tensor, grad: &Tensor, cfg: &AdamConfig) -> Result<()> {
        param.expect_same_shape(grad)?;
        param.expect_same_shape(&self.m)?;
        param.expect_same_shape(&self.v)?;
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
            let g = g + cfg.weight_decay * *p;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

/// One bias-corrected Adam update, returning the new parameter and state.
pub fn adam_step(
    param: &Tensor,
    grad: &Tensor,
    state: &AdamState,
    cfg: &AdamConfig,
) -> Result<(Tensor, AdamState)> {
    let mut param = param.clone();
    let mut state = state.clone();
    state.update(&mut param, grad, cfg)?;
    Ok((param, state))
}

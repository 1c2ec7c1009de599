use rand::Rng;

use super::glorot_uniform;
use crate::embedding::TextMatrix;
use crate::error::{Error, Result};
use crate::numerics::{
    dot, l2_normalize, l2_normalize_backward, mean_over_positions, relu, relu_backward, Tensor,
};

/// Fully-connected residual encoder:
/// `v = mean_t(X)`, `o = normalize(sf · relu(W v + b) + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FCRRParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct FCRRCache {
    mean: Tensor,
    pre_activation: Tensor,
    raw_output: Tensor,
}

impl FCRRParams {
    pub fn new(weight: Tensor, bias: Tensor, scale: f64) -> Result<Self> {
        let d = bias.len();
        if weight.shape() != [d, d] || bias.rank() != 1 {
            return Err(Error::Shape(format!(
                "FCRR weight {:?} and bias {:?} must be d×d and d",
                weight.shape(),
                bias.shape()
            )));
        }
        if !scale.is_finite() {
            return Err(Error::Config("scale factor must be finite".into()));
        }
        Ok(Self { weight, bias, scale })
    }

    pub fn init<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Result<Self> {
        Self::new(glorot_uniform(&[dim, dim], dim, dim, rng), Tensor::zeros(&[dim]), scale)
    }

    pub fn zeros(dim: usize, scale: f64) -> Result<Self> {
        Self::new(Tensor::zeros(&[dim, dim]), Tensor::zeros(&[dim]), scale)
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, x: &TextMatrix) -> Result<Tensor> {
        self.forward_cached(x).map(|(o, _)| o)
    }

    pub fn forward_cached(&self, x: &TextMatrix) -> Result<(Tensor, FCRRCache)> {
        let d = self.dim();
        if x.dim() != d {
            return Err(Error::Shape(format!(
                "text width {} does not match encoder width {d}",
                x.dim()
            )));
        }
        let mean = mean_over_positions(x.as_tensor())?;
        let z: Vec<f64> = (0..d)
            .map(|i| self.bias.data()[i] + dot(self.weight.row(i), mean.data()))
            .collect();
        let pre_activation = Tensor::new(vec![d], z)?;
        let raw_output = relu(&pre_activation).scale(self.scale).add(&mean)?;
        let o = l2_normalize(&raw_output)?;
        Ok((
            o,
            FCRRCache {
                mean,
                pre_activation,
                raw_output,
            },
        ))
    }

    /// Gradients ordered `[weight, bias]`.
    pub fn backward(&self, cache: &FCRRCache, upstream: &Tensor) -> Result<Vec<Tensor>> {
        let g_raw = l2_normalize_backward(&cache.raw_output, upstream)?;
        let g_pre = relu_backward(&cache.pre_activation, &g_raw.scale(self.scale))?;
        let d = self.dim();
        let mut gw = Vec::with_capacity(d * d);
        for &g in g_pre.data() {
            gw.extend(cache.mean.data().iter().map(|v| g * v));
        }
        Ok(vec![Tensor::new(vec![d, d], gw)?, g_pre])
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_reduce_to_mean() {
        let x = TextMatrix::new(Tensor::matrix(&[vec![1.0, 0.0], vec![3.0, 4.0]]).unwrap()).unwrap();
        let p = FCRRParams::zeros(2, 0.05).unwrap();
        let expected = l2_normalize(&Tensor::vector(vec![2.0, 2.0]).unwrap()).unwrap();
        assert_eq!(p.forward(&x).unwrap(), expected);
    }

    #[test]
    fn single_token_residual_is_the_row() {
        let x = TextMatrix::new(Tensor::matrix(&[vec![3.0, -4.0]]).unwrap()).unwrap();
        let p = FCRRParams::new(
            Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::zeros(&[2]),
            0.5,
        )
        .unwrap();
        // relu([3, −4]) = [3, 0]; 0.5·[3,0] + [3,−4] = [4.5, −4].
        let expected = l2_normalize(&Tensor::vector(vec![4.5, -4.0]).unwrap()).unwrap();
        assert!(p.forward(&x).unwrap().max_abs_diff(&expected) < 1e-15);
    }
}

use rand::Rng;

use super::glorot_uniform;
use crate::embedding::TextMatrix;
use crate::error::{Error, Result};
use crate::numerics::{
    conv1d_same, conv1d_same_backward, l2_normalize, l2_normalize_backward, mean_over_positions,
    mean_over_positions_backward, relu, relu_backward, Tensor,
};

/// One convolutional component: `n_k × ws × d_in` kernels and `n_k` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Convolutional residual encoder.
///
/// `o = normalize(sf · mean_t(relu(conv_depth(… relu(conv_1(X)) …))) + mean_t(X))`
///
/// Every block maps `d″` channels to `d″` channels so the pooled output can
/// be added to the mean token embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvRRParams {
    pub blocks: Vec<ConvBlock>,
    pub window: usize,
    pub scale: f64,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvRRCache {
    /// Input of each block; `block_inputs[0]` is the text matrix.
    block_inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
    raw_output: Tensor,
}

impl ConvRRParams {
    pub fn new(blocks: Vec<ConvBlock>, window: usize, scale: f64) -> Result<Self> {
        let p = Self { blocks, window, scale };
        p.validate()?;
        Ok(p)
    }

    /// Glorot-uniform kernels, zero biases.
    pub fn init<R: Rng>(dim: usize, window: usize, depth: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let fan = window * dim;
        let blocks = (0..depth)
            .map(|_| ConvBlock {
                kernels: glorot_uniform(&[dim, window, dim], fan, fan, rng),
                bias: Tensor::zeros(&[dim]),
            })
            .collect();
        Self::new(blocks, window, scale)
    }

    pub fn zeros(dim: usize, window: usize, depth: usize, scale: f64) -> Result<Self> {
        let blocks = (0..depth)
            .map(|_| ConvBlock {
                kernels: Tensor::zeros(&[dim, window, dim]),
                bias: Tensor::zeros(&[dim]),
            })
            .collect();
        Self::new(blocks, window, scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window size {} is not odd", self.window)));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("ConvRR needs at least one block".into()));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("scale factor must be finite".into()));
        }
        let dim = self.dim();
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernels.shape() != [dim, self.window, dim] || b.bias.shape() != [dim] {
                return Err(Error::Shape(format!(
                    "block {i} has kernels {:?} and bias {:?}, expected [{dim}, {window}, {dim}] and [{dim}]",
                    b.kernels.shape(),
                    b.bias.shape(),
                    window = self.window
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].bias.len()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn forward(&self, x: &TextMatrix) -> Result<Tensor> {
        self.forward_cached(x).map(|(o, _)| o)
    }

    pub fn forward_cached(&self, x: &TextMatrix) -> Result<(Tensor, ConvRRCache)> {
        if x.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "text width {} does not match encoder width {}",
                x.dim(),
                self.dim()
            )));
        }
        let input = x.as_tensor();
        let mut block_inputs = Vec::with_capacity(self.depth());
        let mut pre_activations = Vec::with_capacity(self.depth());
        let mut h = input.clone();
        for block in &self.blocks {
            let z = conv1d_same(&h, &block.kernels, &block.bias)?;
            let next = relu(&z);
            block_inputs.push(h);
            pre_activations.push(z);
            h = next;
        }
        let pooled = mean_over_positions(&h)?;
        let residual = mean_over_positions(input)?;
        let raw_output = pooled.scale(self.scale).add(&residual)?;
        let o = l2_normalize(&raw_output)?;
        Ok((
            o,
            ConvRRCache {
                block_inputs,
                pre_activations,
                raw_output,
            },
        ))
    }

    /// Parameter gradients, ordered `[kernels_1, bias_1, …, kernels_depth, bias_depth]`.
    pub fn backward(&self, cache: &ConvRRCache, upstream: &Tensor) -> Result<Vec<Tensor>> {
        let g_raw = l2_normalize_backward(&cache.raw_output, upstream)?;
        let positions = cache.block_inputs[0].shape()[0];
        let mut g = mean_over_positions_backward(positions, &g_raw.scale(self.scale))?;
        let mut grads = vec![None; 2 * self.depth()];
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let g_pre = relu_backward(&cache.pre_activations[b], &g)?;
            let cg = conv1d_same_backward(&cache.block_inputs[b], &block.kernels, &block.bias, &g_pre)?;
            grads[2 * b] = Some(cg.kernels);
            grads[2 * b + 1] = Some(cg.bias);
            g = cg.input;
        }
        Ok(grads.into_iter().map(|t| t.expect("every block visited")).collect())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks.iter().flat_map(|b| [&b.kernels, &b.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.kernels, &mut b.bias])
            .collect()
    }
}

//! Retrieval encoders, triplet loss, hard negative mining and training.

mod checkpoint;
mod convrr;
mod fcrr;
mod loss;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use convrr::{ConvBlock, ConvRRCache, ConvRRParams};
pub use fcrr::{FCRRCache, FCRRParams};
pub use loss::{mine_hard, pair_distance, triplet_loss, LossConfig, MinedTriplet, NegativeRule};
pub use train::{
    batch_loss_and_grads, train, train_from, BatchResult, IterationStats, Mining, TrainConfig, TrainOutcome,
    TrainingSet,
};

use crate::embedding::TextMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Convrr,
    Fcrr,
}

/// Architecture hyperparameters shared by both encoder kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub depth: usize,
    pub window: usize,
    pub scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Convrr,
            depth: 2,
            window: 5,
            scale: 0.05,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.depth) {
            return Err(Error::Config(format!("depth must be in 1..=4, got {}", self.depth)));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window size {} is not odd", self.window)));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("scale factor must be finite".into()));
        }
        Ok(())
    }
}

/// Forward activations for either encoder kind.
#[derive(Debug, Clone)]
pub enum EncoderCache {
    Convrr(ConvRRCache),
    Fcrr(FCRRCache),
}

/// A shared-weight text encoder producing unit vectors. Queries and
/// documents go through the same instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Convrr(ConvRRParams),
    Fcrr(FCRRParams),
}

impl Encoder {
    pub fn init<R: Rng>(cfg: &EncoderConfig, dim: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            EncoderKind::Convrr => Self::Convrr(ConvRRParams::init(dim, cfg.window, cfg.depth, cfg.scale, rng)?),
            EncoderKind::Fcrr => Self::Fcrr(FCRRParams::init(dim, cfg.scale, rng)?),
        })
    }

    /// All-zero parameters: the output is the normalized mean token embedding.
    pub fn zeros(cfg: &EncoderConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            EncoderKind::Convrr => Self::Convrr(ConvRRParams::zeros(dim, cfg.window, cfg.depth, cfg.scale)?),
            EncoderKind::Fcrr => Self::Fcrr(FCRRParams::zeros(dim, cfg.scale)?),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Self::Convrr(_) => EncoderKind::Convrr,
            Self::Fcrr(_) => EncoderKind::Fcrr,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Convrr(p) => p.dim(),
            Self::Fcrr(p) => p.dim(),
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            Self::Convrr(p) => p.scale,
            Self::Fcrr(p) => p.scale,
        }
    }

    pub fn encode(&self, x: &TextMatrix) -> Result<Tensor> {
        match self {
            Self::Convrr(p) => p.forward(x),
            Self::Fcrr(p) => p.forward(x),
        }
    }

    pub fn encode_cached(&self, x: &TextMatrix) -> Result<(Tensor, EncoderCache)> {
        match self {
            Self::Convrr(p) => p.forward_cached(x).map(|(o, c)| (o, EncoderCache::Convrr(c))),
            Self::Fcrr(p) => p.forward_cached(x).map(|(o, c)| (o, EncoderCache::Fcrr(c))),
        }
    }

    /// Gradients in [`Encoder::params`] order.
    pub fn backward(&self, cache: &EncoderCache, upstream: &Tensor) -> Result<Vec<Tensor>> {
        match (self, cache) {
            (Self::Convrr(p), EncoderCache::Convrr(c)) => p.backward(c, upstream),
            (Self::Fcrr(p), EncoderCache::Fcrr(c)) => p.backward(c, upstream),
            _ => Err(Error::Contract("cache from a different encoder kind".into())),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Self::Convrr(p) => p.params(),
            Self::Fcrr(p) => p.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Self::Convrr(p) => p.params_mut(),
            Self::Fcrr(p) => p.params_mut(),
        }
    }
}

/// Uniform in `±√(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite uniform samples")
}

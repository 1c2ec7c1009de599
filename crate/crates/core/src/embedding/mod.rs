//! Multi-resolution word embeddings.
//!
//! A token's vector is built in two stages. Within each pretrained model the
//! `l × d` stack of layer activations is weighted and aggregated into one
//! vector ([`mix_layers`]); the per-model vectors are then weighted and
//! aggregated across models ([`ensemble`]). [`compose_token`] runs both stages
//! and [`compose_text`] stacks the per-token results into the `k × d″` matrix
//! consumed by the encoders.

mod spec_file;
mod store;

pub(crate) use store::read_magic;

use std::collections::HashMap;

pub use spec_file::{parse_ensemble_spec, parse_ensemble_spec_file};
pub use store::{
    read_mre, read_mrt, write_mre, write_mrt, ContextFreeStore, ContextualText, EmbeddingStore,
    EmbeddingStores, MRE_MAGIC, MRT_MAGIC,
};

use crate::corpus::IdfTable;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One token's activations from one model, `l × d`, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredTokenEmbedding {
    pub model_id: String,
    pub layers: Tensor,
}

impl LayeredTokenEmbedding {
    pub fn new(model_id: impl Into<String>, layers: Tensor) -> Result<Self> {
        layers.dims2()?;
        Ok(Self {
            model_id: model_id.into(),
            layers,
        })
    }

    pub fn zeros(model_id: impl Into<String>, num_layers: usize, dim: usize) -> Self {
        Self {
            model_id: model_id.into(),
            layers: Tensor::zeros(&[num_layers, dim]),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.layers.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Sum,
    Average,
    Concatenate,
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "average" | "avg" | "mean" => Ok(Self::Average),
            "concatenate" | "concat" => Ok(Self::Concatenate),
            other => Err(format!(
                "unknown aggregator {other:?} (expected sum, average or concatenate)"
            )),
        }
    }
}

/// Layer weighting for one model.
///
/// With [`Aggregator::Concatenate`] only layers carrying a non-zero weight are
/// joined, so `[¼, ¼, ¼, ¼, 0, …, 0]` selects four layers. When
/// `scale_segments` is false the selected layers are joined unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub model_id: String,
    pub weights: Vec<f64>,
    pub aggregator: Aggregator,
    pub use_idf: bool,
    pub scale_segments: bool,
}

impl MixtureSpec {
    pub fn new(
        model_id: impl Into<String>,
        weights: Vec<f64>,
        aggregator: Aggregator,
        use_idf: bool,
    ) -> Result<Self> {
        let spec = Self {
            model_id: model_id.into(),
            weights,
            aggregator,
            use_idf,
            scale_segments: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_scaled_segments(mut self, scale: bool) -> Self {
        self.scale_segments = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Spec(format!("mixture `{}` has no weights", self.model_id)));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Spec(format!(
                "mixture `{}` has non-finite weights",
                self.model_id
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Spec(format!(
                "mixture `{}` weights sum to {sum}, expected 1",
                self.model_id
            )));
        }
        Ok(())
    }

    fn selected_layers(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// Output width for a model with `d`-dimensional layers.
    pub fn output_dim(&self, dim: usize) -> usize {
        match self.aggregator {
            Aggregator::Sum | Aggregator::Average => dim,
            Aggregator::Concatenate => self.selected_layers() * dim,
        }
    }
}

/// Cross-model weighting. `weights` are the raw coefficients divided by their
/// sum; `raw_weights` keeps what was configured.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub mixtures: Vec<MixtureSpec>,
    pub weights: Vec<f64>,
    pub raw_weights: Vec<f64>,
    pub aggregator: Aggregator,
}

impl EnsembleSpec {
    pub fn new(mixtures: Vec<MixtureSpec>, raw_weights: Vec<f64>, aggregator: Aggregator) -> Result<Self> {
        if mixtures.is_empty() {
            return Err(Error::Spec("ensemble needs at least one mixture".into()));
        }
        if mixtures.len() != raw_weights.len() {
            return Err(Error::Spec(format!(
                "{} mixtures but {} ensemble weights",
                mixtures.len(),
                raw_weights.len()
            )));
        }
        for (i, m) in mixtures.iter().enumerate() {
            m.validate()?;
            if mixtures[..i].iter().any(|o| o.model_id == m.model_id) {
                return Err(Error::Spec(format!("model `{}` listed twice", m.model_id)));
            }
        }
        let total: f64 = raw_weights.iter().sum();
        if !total.is_finite() || total <= 0.0 || raw_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Spec(format!(
                "ensemble weights {raw_weights:?} cannot be normalized"
            )));
        }
        let weights = raw_weights.iter().map(|w| w / total).collect();
        Ok(Self {
            mixtures,
            weights,
            raw_weights,
            aggregator,
        })
    }

    /// Single-model, single-layer pass-through.
    pub fn identity(model_id: &str) -> Self {
        let mixture = MixtureSpec::new(model_id, vec![1.0], Aggregator::Sum, false)
            .expect("identity mixture is valid");
        Self::new(vec![mixture], vec![1.0], Aggregator::Sum).expect("identity ensemble is valid")
    }

    pub fn len(&self) -> usize {
        self.mixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixtures.is_empty()
    }

    /// `d″` given each mixture's layer width, in mixture order.
    pub fn output_dim(&self, layer_dims: &[usize]) -> Result<usize> {
        if layer_dims.len() != self.mixtures.len() {
            return Err(Error::Spec(format!(
                "{} layer widths for {} mixtures",
                layer_dims.len(),
                self.mixtures.len()
            )));
        }
        let parts = self
            .mixtures
            .iter()
            .zip(layer_dims)
            .map(|(m, &d)| m.output_dim(d));
        Ok(match self.aggregator {
            Aggregator::Concatenate => parts.sum(),
            Aggregator::Sum | Aggregator::Average => parts.max().unwrap_or(0),
        })
    }
}

/// A composed per-token vector (`x_i`, length `d″`), or a per-model mixture
/// result before ensembling.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedVector(pub Vec<f64>);

impl ComposedVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The `k × d″` encoder input, one row per token in text order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMatrix(Tensor);

impl TextMatrix {
    pub fn new(matrix: Tensor) -> Result<Self> {
        matrix.dims2()?;
        Ok(Self(matrix))
    }

    pub fn from_rows(rows: &[ComposedVector]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyText)?.dim();
        if rows.iter().any(|r| r.dim() != dim) {
            return Err(Error::Shape("text rows differ in width".into()));
        }
        let data = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
        Ok(Self(Tensor::new(vec![rows.len(), dim], data)?))
    }

    pub fn num_tokens(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Weights each layer and aggregates; the IDF factor, when enabled, scales
/// the aggregated vector once.
pub fn mix_layers(emb: &LayeredTokenEmbedding, spec: &MixtureSpec, idf_weight: f64) -> Result<ComposedVector> {
    if emb.model_id != spec.model_id {
        return Err(Error::Spec(format!(
            "mixture for `{}` applied to embedding of `{}`",
            spec.model_id, emb.model_id
        )));
    }
    spec.validate()?;
    let (l, d) = (emb.num_layers(), emb.dim());
    if spec.weights.len() != l {
        return Err(Error::Spec(format!(
            "mixture `{}` has {} weights for {l} layers",
            spec.model_id,
            spec.weights.len()
        )));
    }
    let idf = if spec.use_idf { idf_weight } else { 1.0 };
    let mut out = match spec.aggregator {
        Aggregator::Sum | Aggregator::Average => {
            let mut acc = vec![0.0; d];
            for (j, &w) in spec.weights.iter().enumerate() {
                for (a, &x) in acc.iter_mut().zip(emb.layers.row(j)) {
                    *a += w * x;
                }
            }
            if spec.aggregator == Aggregator::Average {
                let inv = 1.0 / l as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
            }
            acc
        }
        Aggregator::Concatenate => {
            let mut acc = Vec::with_capacity(spec.output_dim(d));
            for (j, &w) in spec.weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let scale = if spec.scale_segments { w } else { 1.0 };
                acc.extend(emb.layers.row(j).iter().map(|x| scale * x));
            }
            acc
        }
    };
    if spec.use_idf {
        out.iter_mut().for_each(|x| *x *= idf);
    }
    Ok(ComposedVector(out))
}

/// Weights each part by its normalized coefficient and aggregates. Sum and
/// average right-pad shorter parts with zeros to the widest part.
pub fn ensemble(parts: &[ComposedVector], spec: &EnsembleSpec) -> Result<ComposedVector> {
    if parts.len() != spec.weights.len() {
        return Err(Error::Spec(format!(
            "{} parts for an ensemble of {}",
            parts.len(),
            spec.weights.len()
        )));
    }
    let out = match spec.aggregator {
        Aggregator::Concatenate => parts
            .iter()
            .zip(&spec.weights)
            .flat_map(|(p, &u)| p.0.iter().map(move |x| u * x))
            .collect(),
        Aggregator::Sum | Aggregator::Average => {
            let width = parts.iter().map(ComposedVector::dim).max().unwrap_or(0);
            let mut acc = vec![0.0; width];
            for (p, &u) in parts.iter().zip(&spec.weights) {
                for (a, &x) in acc.iter_mut().zip(&p.0) {
                    *a += u * x;
                }
            }
            if spec.aggregator == Aggregator::Average {
                let inv = 1.0 / parts.len() as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
            }
            acc
        }
    };
    Ok(ComposedVector(out))
}

/// Mixes each model's layers then ensembles the results, in `spec` order.
pub fn compose_token(
    layer_sets: &HashMap<String, LayeredTokenEmbedding>,
    spec: &EnsembleSpec,
    idf_weight: f64,
) -> Result<ComposedVector> {
    let parts = spec
        .mixtures
        .iter()
        .map(|m| {
            let emb = layer_sets
                .get(&m.model_id)
                .ok_or_else(|| Error::MissingModel(m.model_id.clone()))?;
            mix_layers(emb, m, idf_weight)
        })
        .collect::<Result<Vec<_>>>()?;
    ensemble(&parts, spec)
}

/// Composes every token of a text. A token missing from one model's store
/// gets a zero layer matrix for that model only.
///
/// `text_id` keys contextual stores; context-free stores key by token string.
pub fn compose_text(
    tokens: &[String],
    text_id: Option<u32>,
    stores: &EmbeddingStores,
    spec: &EnsembleSpec,
    idf: &IdfTable,
) -> Result<TextMatrix> {
    let mut any_resolved = false;
    let mut rows = Vec::with_capacity(tokens.len());
    for (position, token) in tokens.iter().enumerate() {
        let mut layer_sets = HashMap::with_capacity(spec.len());
        for m in &spec.mixtures {
            let store = stores
                .get(&m.model_id)
                .ok_or_else(|| Error::MissingModel(m.model_id.clone()))?;
            let emb = match store.lookup(token, text_id, position, tokens.len())? {
                Some(layers) => {
                    any_resolved = true;
                    LayeredTokenEmbedding::new(m.model_id.clone(), layers)?
                }
                None => LayeredTokenEmbedding::zeros(m.model_id.clone(), store.num_layers(), store.dim()),
            };
            layer_sets.insert(m.model_id.clone(), emb);
        }
        rows.push(compose_token(&layer_sets, spec, idf.lookup(token))?);
    }
    if !any_resolved {
        return Err(Error::EmptyText);
    }
    TextMatrix::from_rows(&rows)
}

//! Seeded synthetic retrieval benchmark.
//!
//! Documents are noisy copies of latent cluster centers. Each query starts
//! from its document's vector, passes through a per-coordinate nonlinearity
//! that folds the sign of a subset of coordinates, and receives fresh noise.
//! Every text is a short run of noisy token rows around its base vector.
//! Averaging token rows (the zero-weight encoder) is hurt by the folded
//! coordinates; a trained encoder can learn sign-invariant features for them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::TextMatrix;
use crate::error::Result;
use crate::model::{EncoderConfig, EncoderKind, TrainConfig, TrainingSet};
use crate::numerics::AdamConfig;
use crate::numerics::Tensor;
use crate::retrieval::EvalQuery;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the cluster centers.
    pub center_scale: f64,
    pub documents: usize,
    pub queries: usize,
    /// Spread of documents around their cluster center.
    pub doc_noise: f64,
    /// Noise added to each query after distortion.
    pub query_noise: f64,
    /// Spread of token rows around their text's base vector.
    pub token_noise: f64,
    pub tokens_per_text: usize,
    /// Leading coordinates whose sign is folded in queries (`x → |x|`).
    pub folded_coordinates: usize,
    /// Every `holdout_every`-th query of a document is held out for evaluation.
    pub holdout_every: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            clusters: 32,
            dim: 64,
            center_scale: 0.3,
            documents: 512,
            queries: 2048,
            doc_noise: 0.3,
            query_noise: 0.1,
            token_noise: 0.1,
            tokens_per_text: 4,
            folded_coordinates: 40,
            holdout_every: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub train: TrainingSet,
    pub eval_queries: Vec<EvalQuery>,
    pub docs: Vec<(String, TextMatrix)>,
}

impl SyntheticConfig {
    fn distort(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(c, &x)| if c < self.folded_coordinates { x.abs() } else { x })
            .collect()
    }
}

fn gaussian(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn text_around(base: &[f64], cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<TextMatrix> {
    let mut data = Vec::with_capacity(cfg.tokens_per_text * base.len());
    for _ in 0..cfg.tokens_per_text {
        let noise = gaussian(base.len(), cfg.token_noise, rng);
        data.extend(base.iter().zip(noise).map(|(b, n)| b + n));
    }
    TextMatrix::new(Tensor::new(vec![cfg.tokens_per_text, base.len()], data)?)
}

/// Training setup used with the benchmark: 200 iterations of batch 64.
pub fn benchmark_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 200,
        batch_size: 64,
        seed,
        adam: AdamConfig {
            learning_rate: 3e-3,
            ..Default::default()
        },
        encoder: EncoderConfig {
            kind: EncoderKind::Convrr,
            depth: 2,
            window: 5,
            scale: 1.0,
        },
        ..Default::default()
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.clusters).map(|_| gaussian(cfg.dim, cfg.center_scale, &mut rng)).collect();
    let doc_bases: Vec<Vec<f64>> = (0..cfg.documents)
        .map(|i| {
            let center = &centers[i % cfg.clusters];
            gaussian(cfg.dim, cfg.doc_noise, &mut rng)
                .into_iter()
                .zip(center)
                .map(|(n, c)| c + n)
                .collect()
        })
        .collect();
    let doc_ids: Vec<String> = (0..cfg.documents).map(|i| format!("doc{i:04}")).collect();
    let docs = doc_bases
        .iter()
        .map(|b| text_around(b, cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut train_queries = Vec::new();
    let mut train_gold = Vec::new();
    let mut eval_queries = Vec::new();
    for q in 0..cfg.queries {
        let doc = q % cfg.documents;
        let base: Vec<f64> = cfg
            .distort(&doc_bases[doc])
            .into_iter()
            .zip(gaussian(cfg.dim, cfg.query_noise, &mut rng))
            .map(|(x, n)| x + n)
            .collect();
        let text = text_around(&base, cfg, &mut rng)?;
        if (q / cfg.documents) % cfg.holdout_every == cfg.holdout_every - 1 {
            eval_queries.push(EvalQuery {
                id: format!("q{q:05}"),
                text,
                gold: doc_ids[doc].clone(),
                candidates: None,
            });
        } else {
            train_queries.push(text);
            train_gold.push(doc);
        }
    }
    let train = TrainingSet::new(doc_ids.clone(), docs.clone(), train_queries, train_gold)?;
    Ok(SyntheticBenchmark {
        train,
        eval_queries,
        docs: doc_ids.into_iter().zip(docs).collect(),
    })
}

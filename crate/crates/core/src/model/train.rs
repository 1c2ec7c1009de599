use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{mine_by_index, triplet_loss, LossConfig, NegativeRule};
use super::{Encoder, EncoderCache, EncoderConfig};
use crate::embedding::TextMatrix;
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Tensor};

/// Texts per backward work unit. Gradients are summed inside a chunk in
/// index order and chunk sums are added in chunk order, so the result does
/// not depend on the number of worker threads.
const BACKWARD_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mining {
    /// Hardest negative among the batch's documents.
    #[default]
    BatchHard,
    /// Batch documents, semi-hard rule.
    SemiHard,
    /// Hardest negative over the whole document collection.
    FullScan,
}

impl Mining {
    fn rule(self) -> NegativeRule {
        match self {
            Mining::SemiHard => NegativeRule::SemiHard,
            Mining::BatchHard | Mining::FullScan => NegativeRule::Hardest,
        }
    }
}

impl std::str::FromStr for Mining {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "batch-hard" => Ok(Self::BatchHard),
            "semi-hard" => Ok(Self::SemiHard),
            "full-scan" => Ok(Self::FullScan),
            other => Err(format!("unknown mining mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub mining: Mining,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            batch_size: 2000,
            seed: 0,
            adam: AdamConfig::default(),
            mining: Mining::BatchHard,
            loss: LossConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        self.adam.validate()?;
        self.loss.validate()?;
        self.encoder.validate()
    }
}

/// Documents and queries already composed into text matrices.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub doc_ids: Vec<String>,
    pub docs: Vec<TextMatrix>,
    pub queries: Vec<TextMatrix>,
    /// Index into `docs` of each query's positive document.
    pub gold: Vec<usize>,
}

impl TrainingSet {
    pub fn new(doc_ids: Vec<String>, docs: Vec<TextMatrix>, queries: Vec<TextMatrix>, gold: Vec<usize>) -> Result<Self> {
        if doc_ids.len() != docs.len() || queries.len() != gold.len() {
            return Err(Error::Dataset("mismatched id, text and gold lengths".into()));
        }
        if docs.len() < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 documents for negatives, got {}",
                docs.len()
            )));
        }
        if queries.is_empty() {
            return Err(Error::Dataset("no training queries".into()));
        }
        if let Some(&g) = gold.iter().find(|&&g| g >= docs.len()) {
            return Err(Error::Dataset(format!("gold index {g} out of range")));
        }
        let dim = docs[0].dim();
        if docs.iter().chain(&queries).any(|t| t.dim() != dim) {
            return Err(Error::Dataset("texts differ in embedding width".into()));
        }
        Ok(Self {
            doc_ids,
            docs,
            queries,
            gold,
        })
    }

    pub fn dim(&self) -> usize {
        self.docs[0].dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_loss: f64,
    pub active_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub trace: Vec<IterationStats>,
}

/// Mean triplet loss over one batch and its gradient for every parameter.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub mean_loss: f64,
    pub active_fraction: f64,
    pub grads: Vec<Tensor>,
}

fn encode_all(encoder: &Encoder, texts: Vec<&TextMatrix>) -> Result<Vec<(Tensor, EncoderCache)>> {
    texts.into_par_iter().map(|t| encoder.encode_cached(t)).collect()
}

/// Encodes `queries` and `candidates` (indices into the set), mines one
/// negative per query among the candidates and backpropagates the mean hinge.
pub fn batch_loss_and_grads(
    encoder: &Encoder,
    set: &TrainingSet,
    queries: &[usize],
    candidates: &[usize],
    rule: NegativeRule,
    loss: &LossConfig,
) -> Result<BatchResult> {
    let gold = queries
        .iter()
        .map(|&q| {
            candidates
                .iter()
                .position(|&d| d == set.gold[q])
                .ok_or_else(|| Error::Mining(format!("query {q} has no positive among the candidates")))
        })
        .collect::<Result<Vec<_>>>()?;
    let q_enc = encode_all(encoder, queries.iter().map(|&q| &set.queries[q]).collect())?;
    let d_enc = encode_all(encoder, candidates.iter().map(|&d| &set.docs[d]).collect())?;
    let anchors: Vec<Tensor> = q_enc.iter().map(|(o, _)| o.clone()).collect();
    let doc_vecs: Vec<Tensor> = d_enc.iter().map(|(o, _)| o.clone()).collect();
    let triplets = mine_by_index(&anchors, &doc_vecs, &gold, rule)?;

    let n = triplets.len() as f64;
    let dim = encoder.dim();
    let mut q_up = vec![vec![0.0; dim]; anchors.len()];
    let mut d_up = vec![vec![0.0; dim]; doc_vecs.len()];
    let mut total = 0.0;
    let mut active = 0usize;
    for t in &triplets {
        let l = triplet_loss(t.d_pos, t.d_neg, loss);
        total += l;
        if l <= 0.0 {
            continue;
        }
        active += 1;
        let a = anchors[t.anchor].data();
        let p = doc_vecs[t.positive].data();
        let ng = doc_vecs[t.negative].data();
        let c = 2.0 / n;
        for i in 0..dim {
            q_up[t.anchor][i] += c * (ng[i] - p[i]);
            d_up[t.positive][i] -= c * (a[i] - p[i]);
            d_up[t.negative][i] += c * (a[i] - ng[i]);
        }
    }

    let work: Vec<(&EncoderCache, Vec<f64>)> = q_enc
        .iter()
        .zip(q_up)
        .chain(d_enc.iter().zip(d_up))
        .filter(|(_, g)| g.iter().any(|&x| x != 0.0))
        .map(|((_, cache), g)| (cache, g))
        .collect();
    let partials: Vec<Option<Vec<Tensor>>> = work
        .par_chunks(BACKWARD_CHUNK)
        .map(|chunk| {
            let mut acc: Option<Vec<Tensor>> = None;
            for (cache, g) in chunk {
                let upstream = Tensor::new(vec![dim], g.clone())?;
                let grads = encoder.backward(cache, &upstream)?;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut grads: Vec<Tensor> = encoder.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    for part in partials.into_iter().flatten() {
        for (a, g) in grads.iter_mut().zip(&part) {
            a.add_assign(g)?;
        }
    }
    Ok(BatchResult {
        mean_loss: total / n,
        active_fraction: active as f64 / n,
        grads,
    })
}

/// Uniform sampling without replacement, reshuffling when exhausted.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, cursor: 0 }
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let take = (size - batch.len()).min(self.order.len() - self.cursor);
            batch.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        batch
    }
}

/// Gold documents of the batch in first-seen order, topped up with the
/// lowest-index documents when fewer than two are distinct.
fn batch_documents(set: &TrainingSet, queries: &[usize]) -> Vec<usize> {
    let mut docs = Vec::new();
    for &q in queries {
        if !docs.contains(&set.gold[q]) {
            docs.push(set.gold[q]);
        }
    }
    let mut extra = 0;
    while docs.len() < 2 {
        if !docs.contains(&extra) {
            docs.push(extra);
        }
        extra += 1;
    }
    docs
}

/// Seeds one generator from `cfg.seed`, initializes the encoder from it, then
/// trains with the same generator driving batch sampling.
pub fn train(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = Encoder::init(&cfg.encoder, set.dim(), &mut rng)?;
    run(set, encoder, cfg, &mut rng)
}

/// Trains an existing encoder; batch sampling is seeded from `cfg.seed`.
pub fn train_from(set: &TrainingSet, encoder: Encoder, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if encoder.dim() != set.dim() {
        return Err(Error::Shape(format!(
            "encoder width {} does not match data width {}",
            encoder.dim(),
            set.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(set, encoder, cfg, &mut rng)
}

fn run(set: &TrainingSet, mut encoder: Encoder, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<TrainOutcome> {
    let mut states: Vec<AdamState> = encoder.params().iter().map(|p| AdamState::new(p.shape())).collect();
    let mut sampler = BatchSampler::new(set.queries.len(), rng);
    let all_docs: Vec<usize> = (0..set.docs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let queries = sampler.next(cfg.batch_size, rng);
        let candidates = match cfg.mining {
            Mining::FullScan => all_docs.clone(),
            Mining::BatchHard | Mining::SemiHard => batch_documents(set, &queries),
        };
        let batch = batch_loss_and_grads(&encoder, set, &queries, &candidates, cfg.mining.rule(), &cfg.loss)?;
        for ((param, grad), state) in encoder.params_mut().into_iter().zip(&batch.grads).zip(&mut states) {
            state.update(param, grad, &cfg.adam)?;
        }
        trace.push(IterationStats {
            iteration,
            mean_loss: batch.mean_loss,
            active_fraction: batch.active_fraction,
        });
    }
    Ok(TrainOutcome { encoder, trace })
}

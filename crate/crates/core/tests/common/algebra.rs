//! Measurements over the embedding algebra, shared with the acceptance report.

use std::collections::HashMap;

use convrr::embedding::{
    compose_token, ensemble, mix_layers, Aggregator, ComposedVector, EnsembleSpec, LayeredTokenEmbedding, MixtureSpec,
};
use convrr::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::uniform;

pub const AGGREGATORS: [Aggregator; 3] = [Aggregator::Sum, Aggregator::Average, Aggregator::Concatenate];

/// Random weights summing to one, with roughly a third of them zero.
pub fn random_weights(l: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..l)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..1.0) })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let last = w.iter().rposition(|&x| x != 0.0).expect("nonzero weight");
            let rest: f64 = w.iter().enumerate().filter(|&(i, _)| i != last).map(|(_, x)| x).sum();
            w[last] = 1.0 - rest;
            return w;
        }
    }
}

/// A random ensemble over 1–4 models together with one token's layers.
pub struct RandomCase {
    pub spec: EnsembleSpec,
    pub layers: HashMap<String, LayeredTokenEmbedding>,
    pub dims: Vec<usize>,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> RandomCase {
    let n = rng.gen_range(1..=4);
    let mut mixtures = Vec::new();
    let mut layers = HashMap::new();
    let mut dims = Vec::new();
    for j in 0..n {
        let id = format!("m{j}");
        let l = rng.gen_range(1..=5);
        let d = rng.gen_range(1..=6);
        let agg = AGGREGATORS[rng.gen_range(0..3)];
        let mixture = MixtureSpec::new(id.clone(), random_weights(l, rng), agg, rng.gen_bool(0.5))
            .unwrap()
            .with_scaled_segments(rng.gen_bool(0.7));
        mixtures.push(mixture);
        layers.insert(id.clone(), LayeredTokenEmbedding::new(id, uniform(&[l, d], -2.0, 2.0, rng)).unwrap());
        dims.push(d);
    }
    let u = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
    let spec = EnsembleSpec::new(mixtures, u, AGGREGATORS[rng.gen_range(0..3)]).unwrap();
    RandomCase { spec, layers, dims }
}

/// Largest `|output − selected layer|` for one-hot sum mixtures.
pub fn one_hot_identity_error(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let l = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=8);
        let pick = rng.gen_range(0..l);
        let mut w = vec![0.0; l];
        w[pick] = 1.0;
        let emb = LayeredTokenEmbedding::new("m", uniform(&[l, d], -3.0, 3.0, &mut rng)).unwrap();
        let spec = MixtureSpec::new("m", w, Aggregator::Sum, false).unwrap();
        let out = mix_layers(&emb, &spec, 1.0).unwrap();
        let token = compose_token(
            &HashMap::from([("m".to_string(), emb.clone())]),
            &EnsembleSpec::new(vec![spec], vec![1.0], Aggregator::Sum).unwrap(),
            1.0,
        )
        .unwrap();
        for (row, v) in [(&out, emb.layers.row(pick)), (&token, emb.layers.row(pick))] {
            for (a, b) in row.0.iter().zip(v) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Count of random cases whose composed width differs from the dimension law.
pub fn dimension_law_violations(seed: u64, trials: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let case = random_case(&mut rng);
            let widths: Vec<usize> = case
                .spec
                .mixtures
                .iter()
                .zip(&case.dims)
                .map(|(m, &d)| match m.aggregator {
                    Aggregator::Concatenate => m.weights.iter().filter(|&&w| w != 0.0).count() * d,
                    _ => d,
                })
                .collect();
            let expected = match case.spec.aggregator {
                Aggregator::Concatenate => widths.iter().sum(),
                _ => *widths.iter().max().unwrap(),
            };
            let got = compose_token(&case.layers, &case.spec, 1.5).unwrap().dim();
            got != expected || case.spec.output_dim(&case.dims).unwrap() != expected
        })
        .count()
}

fn published_spec(bert_layers: usize) -> EnsembleSpec {
    let mut bert = vec![0.0; bert_layers];
    bert[..4].copy_from_slice(&[0.25; 4]);
    EnsembleSpec::new(
        vec![
            MixtureSpec::new("bert", bert, Aggregator::Concatenate, false).unwrap(),
            MixtureSpec::new("elmo", vec![0.0, 0.0, 1.0], Aggregator::Sum, true).unwrap(),
            MixtureSpec::new("fasttext", vec![1.0], Aggregator::Sum, true).unwrap(),
        ],
        vec![1.0 / 3.0; 3],
        Aggregator::Concatenate,
    )
    .unwrap()
}

/// Composed width of the best published configuration (BERT last four layers
/// concatenated, ELMo token layer with IDF, fastText with IDF, all
/// concatenated) on synthetic layers of the given widths.
pub fn published_config_width(bert_dim: usize, elmo_dim: usize, fasttext_dim: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(4372);
    let spec = published_spec(12);
    let layers = HashMap::from([
        ("bert".to_string(), LayeredTokenEmbedding::new("bert", uniform(&[12, bert_dim], -1.0, 1.0, &mut rng)).unwrap()),
        ("elmo".to_string(), LayeredTokenEmbedding::new("elmo", uniform(&[3, elmo_dim], -1.0, 1.0, &mut rng)).unwrap()),
        (
            "fasttext".to_string(),
            LayeredTokenEmbedding::new("fasttext", uniform(&[1, fasttext_dim], -1.0, 1.0, &mut rng)).unwrap(),
        ),
    ]);
    let out = compose_token(&layers, &spec, 2.0).unwrap();
    assert_eq!(spec.output_dim(&[bert_dim, elmo_dim, fasttext_dim]).unwrap(), out.dim());
    out.dim()
}

/// Largest relative deviation of `compose(c·E)` from `c·compose(E)`.
pub fn homogeneity_error(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let case = random_case(&mut rng);
        let c = rng.gen_range(-4.0..4.0);
        let idf = rng.gen_range(0.0..3.0);
        let base = compose_token(&case.layers, &case.spec, idf).unwrap();
        let scaled_layers = case
            .layers
            .iter()
            .map(|(k, e)| (k.clone(), LayeredTokenEmbedding::new(k.clone(), e.layers.scale(c)).unwrap()))
            .collect();
        let scaled = compose_token(&scaled_layers, &case.spec, idf).unwrap();
        for (a, b) in scaled.0.iter().zip(&base.0) {
            worst = worst.max((a - c * b).abs() / (c * b).abs().max(1.0));
        }
    }
    worst
}

/// Cases where `compose_token` differs bitwise from mixing then ensembling.
pub fn compositional_mismatches(seed: u64, trials: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let case = random_case(&mut rng);
            let idf = rng.gen_range(0.0..3.0);
            let parts: Vec<ComposedVector> = case
                .spec
                .mixtures
                .iter()
                .map(|m| mix_layers(&case.layers[&m.model_id], m, idf).unwrap())
                .collect();
            let manual = ensemble(&parts, &case.spec).unwrap();
            compose_token(&case.layers, &case.spec, idf).unwrap() != manual
        })
        .count()
}

/// Zero-pad-and-add reference for sum and average ensembles.
pub fn pad_and_add(parts: &[Vec<f64>], u: &[f64], average: bool) -> Vec<f64> {
    let width = parts.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![0.0; width];
    for (p, w) in parts.iter().zip(u) {
        let mut padded = p.clone();
        padded.resize(width, 0.0);
        for (o, x) in out.iter_mut().zip(padded) {
            *o += w * x;
        }
    }
    if average {
        for o in &mut out {
            *o /= parts.len() as f64;
        }
    }
    out
}

pub fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

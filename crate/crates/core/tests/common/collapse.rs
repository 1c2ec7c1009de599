//! Encoders whose learned branch is switched off must rank exactly like
//! plain mean-embedding retrieval.

use convrr::embedding::TextMatrix;
use convrr::model::{Encoder, EncoderConfig, EncoderKind};
use convrr::numerics::{l2_normalize, mean_over_positions, Tensor};
use convrr::retrieval::{encode_index, rank_queries, EvalQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::text;

pub struct Fixture {
    pub docs: Vec<(String, TextMatrix)>,
    pub queries: Vec<EvalQuery>,
}

pub fn fixture(seed: u64, n_docs: usize, n_queries: usize, d: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<(String, TextMatrix)> = (0..n_docs)
        .map(|i| (format!("doc{i}"), text(rng.gen_range(1..=6), d, &mut rng)))
        .collect();
    let queries = (0..n_queries)
        .map(|q| EvalQuery {
            id: format!("q{q}"),
            text: text(rng.gen_range(1..=6), d, &mut rng),
            gold: format!("doc{}", rng.gen_range(0..n_docs)),
            candidates: None,
        })
        .collect();
    Fixture { docs, queries }
}

fn mean_direction(t: &TextMatrix) -> Tensor {
    l2_normalize(&mean_over_positions(t.as_tensor()).unwrap()).unwrap()
}

/// Full rankings of plain mean-embedding retrieval, by stable sort.
pub fn baseline_rankings(f: &Fixture) -> Vec<(String, Vec<String>)> {
    let doc_vecs: Vec<Tensor> = f.docs.iter().map(|(_, t)| mean_direction(t)).collect();
    f.queries
        .iter()
        .map(|q| {
            let v = mean_direction(&q.text);
            let mut scored: Vec<(usize, f64)> = doc_vecs
                .iter()
                .enumerate()
                .map(|(i, dv)| (i, v.data().iter().zip(dv.data()).map(|(a, b)| (a - b) * (a - b)).sum()))
                .collect();
            scored.sort_by(|a, b| a.1.total_cmp(&b.1));
            (q.id.clone(), scored.into_iter().map(|(i, _)| f.docs[i].0.clone()).collect())
        })
        .collect()
}

pub fn encoder_rankings(encoder: &Encoder, f: &Fixture) -> Vec<(String, Vec<String>)> {
    let index = encode_index(encoder, &f.docs).unwrap();
    rank_queries(encoder, &index, &f.queries, f.docs.len()).unwrap()
}

/// The collapsed encoders: all-zero ConvRR and FCRR, and randomly
/// initialized ones with `sf = 0`.
pub fn collapsed_encoders(d: usize, seed: u64) -> Vec<(String, Encoder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for kind in [EncoderKind::Convrr, EncoderKind::Fcrr] {
        let cfg = EncoderConfig { kind, ..Default::default() };
        out.push((format!("{kind:?} zero weights"), Encoder::zeros(&cfg, d).unwrap()));
        let cfg = EncoderConfig { kind, scale: 0.0, ..Default::default() };
        out.push((format!("{kind:?} sf=0"), Encoder::init(&cfg, d, &mut rng).unwrap()));
    }
    out
}

/// Names of collapsed encoders whose rankings differ from the baseline.
pub fn collapse_failures(seed: u64) -> Vec<String> {
    let f = fixture(seed, 60, 40, 8);
    let baseline = baseline_rankings(&f);
    collapsed_encoders(8, seed)
        .into_iter()
        .filter(|(_, enc)| encoder_rankings(enc, &f) != baseline)
        .map(|(name, _)| name)
        .collect()
}

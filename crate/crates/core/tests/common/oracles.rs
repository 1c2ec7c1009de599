//! Brute-force references for mining, search, recall and IDF.

use std::collections::HashMap;

use convrr::corpus::{build_idf, Document};
use convrr::model::{mine_hard, NegativeRule};
use convrr::retrieval::{build_index, recall_at_k, search};
use convrr::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::unit;

fn sq(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Batches of up to 64 anchors over up to 64 documents, with some duplicated
/// document vectors to exercise tie-breaking. Returns the number of anchors
/// whose mined negative differs from an exhaustive scan.
pub fn mining_mismatches(seed: u64, batches: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..batches {
        let d = rng.gen_range(2..=8);
        let n_docs = rng.gen_range(2..=64);
        let n_anchors = rng.gen_range(1..=64);
        let mut docs: Vec<(String, Tensor)> = Vec::new();
        for i in 0..n_docs {
            let v = if i > 0 && rng.gen_bool(0.2) {
                docs[rng.gen_range(0..i)].1.clone()
            } else {
                unit(d, &mut rng)
            };
            docs.push((format!("doc{i}"), v));
        }
        let anchors: Vec<Tensor> = (0..n_anchors).map(|_| unit(d, &mut rng)).collect();
        let gold_idx: Vec<usize> = (0..n_anchors).map(|_| rng.gen_range(0..n_docs)).collect();
        let gold: Vec<String> = gold_idx.iter().map(|&g| docs[g].0.clone()).collect();
        let mined = mine_hard(&anchors, &docs, &gold, NegativeRule::Hardest).unwrap();
        for (a, t) in mined.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (j, (_, v)) in docs.iter().enumerate() {
                if j == gold_idx[a] {
                    continue;
                }
                let dist = sq(&anchors[a], v);
                match best {
                    Some((_, b)) if b <= dist => {}
                    _ => best = Some((j, dist)),
                }
            }
            if t.negative != best.unwrap().0 || t.positive != gold_idx[a] {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Random indexes of up to `max_docs` documents. Returns the number of
/// searches whose result is not the prefix of a full stable sort.
pub fn search_mismatches(seed: u64, trials: usize, max_docs: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let d = rng.gen_range(2..=16);
        let n = rng.gen_range(1..=max_docs);
        let mut docs: Vec<(String, Tensor)> = Vec::new();
        for i in 0..n {
            let v = if i > 0 && rng.gen_bool(0.1) {
                docs[rng.gen_range(0..i)].1.clone()
            } else {
                unit(d, &mut rng)
            };
            docs.push((format!("d{i}"), v));
        }
        let query = unit(d, &mut rng);
        let k = rng.gen_range(1..=n + 5);
        let index = build_index(docs.clone()).unwrap();
        let hits = search(&index, &query, k).unwrap();
        let mut all: Vec<(usize, f64)> = docs.iter().enumerate().map(|(i, (_, v))| (i, sq(&query, v))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1));
        let expected: Vec<(String, f64)> = all.iter().take(k).map(|&(i, dist)| (docs[i].0.clone(), dist)).collect();
        let got: Vec<(String, f64)> = hits.into_iter().map(|h| (h.doc_id, h.distance)).collect();
        if got != expected {
            mismatches += 1;
        }
    }
    mismatches
}

/// Four queries whose gold documents sit at ranks 1, 2, 4 and 6.
pub fn recall_fixture(k: usize) -> f64 {
    let ranked: Vec<String> = (1..=6).map(|r| format!("r{r}")).collect();
    let rankings: Vec<(String, Vec<String>)> = (0..4).map(|q| (format!("q{q}"), ranked.clone())).collect();
    let gold: HashMap<String, String> = [(0, "r1"), (1, "r2"), (2, "r4"), (3, "r6")]
        .into_iter()
        .map(|(q, d)| (format!("q{q}"), d.to_string()))
        .collect();
    recall_at_k(&rankings, &gold, k).unwrap()
}

/// Largest relative deviation of `exp(idf)·df` from `N` over random corpora.
pub fn idf_identity_error(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let n = rng.gen_range(1..=200);
        let corpus: Vec<Document> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..=12);
                let text = (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect::<Vec<_>>().join(" ");
                Document { id: format!("d{i}"), text }
            })
            .collect();
        let table = build_idf(&corpus).unwrap();
        for (_, e) in table.iter() {
            let n = f64::from(table.num_documents());
            worst = worst.max((e.idf.exp() * f64::from(e.df) - n).abs() / n);
        }
    }
    worst
}

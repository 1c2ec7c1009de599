//! A small on-disk dataset: JSONL corpus and QA pairs, two context-free
//! stores, one contextual store and two spec files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use convrr::corpus::tokenize;
use convrr::embedding::{write_mre, write_mrt, ContextFreeStore, ContextualText};
use convrr::pipeline::PipelinePaths;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const DOCS: usize = 24;
pub const QUERIES: usize = 96;
/// Appears in documents but in no store.
pub const OOV: &str = "qqq";

pub struct DiskFixture {
    pub root: PathBuf,
    /// `ft` and `lm` context-free stores.
    pub context_free: PipelinePaths,
    /// `ft` plus the contextual `ctx` store.
    pub contextual: PipelinePaths,
}

fn vocabulary() -> Vec<String> {
    (0..60).map(|i| format!("w{i:02}")).collect()
}

fn write_store(path: &Path, layers: usize, dim: usize, vocab: &[String], rng: &mut ChaCha8Rng) {
    let mut store = ContextFreeStore::new(layers, dim);
    for token in vocab {
        store.insert(token.clone(), (0..layers * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap();
    }
    let mut out = Vec::new();
    write_mre(&store, &mut out).unwrap();
    fs::write(path, out).unwrap();
}

pub fn write_fixture(root: &Path, seed: u64) -> DiskFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary();
    let mut docs = Vec::new();
    let mut lines = String::new();
    for i in 0..DOCS {
        let mut words: Vec<String> = (0..6).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
        if i % 5 == 0 {
            words.push(OOV.into());
        }
        let text = words.join(" ");
        lines += &format!("{}\n", json!({"id": format!("doc{i:02}"), "text": text}));
        docs.push(words);
    }
    let corpus = root.join("corpus.jsonl");
    fs::write(&corpus, lines).unwrap();

    let mut lines = String::new();
    let mut texts: Vec<String> = docs.iter().map(|w| w.join(" ")).collect();
    for q in 0..QUERIES {
        let gold = q % DOCS;
        let mut words: Vec<String> = docs[gold].iter().filter(|w| *w != OOV).take(3).cloned().collect();
        words.push(vocab.choose(&mut rng).unwrap().clone());
        words.shuffle(&mut rng);
        let text = format!("{}?", words.join(", "));
        let mut record = json!({"query_id": format!("q{q:03}"), "query_text": text, "positive_doc_id": format!("doc{gold:02}")});
        if q % 7 == 3 {
            let mut cands: Vec<String> = (0..5).map(|k| format!("doc{:02}", (gold + k * 5) % DOCS)).collect();
            cands.sort();
            record["candidates"] = json!(cands);
        }
        lines += &format!("{record}\n");
        texts.push(text);
    }
    let qa = root.join("qa.jsonl");
    fs::write(&qa, lines).unwrap();

    let ft = root.join("ft.mre");
    let lm = root.join("lm.mre");
    write_store(&ft, 1, 6, &vocab, &mut rng);
    write_store(&lm, 3, 4, &vocab, &mut rng);

    let ctx = root.join("ctx");
    fs::create_dir_all(&ctx).unwrap();
    for (id, text) in texts.iter().enumerate() {
        let k = tokenize(text).len();
        let values = (0..k * 2 * 3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let t = ContextualText::new(id as u32, k, 2, 3, values).unwrap();
        let mut out = Vec::new();
        write_mrt(&t, &mut out).unwrap();
        fs::write(ctx.join(format!("{id:05}.mrt")), out).unwrap();
    }

    let spec_cf = root.join("cf.spec");
    fs::write(
        &spec_cf,
        "ensemble.aggregator = concatenate\nensemble.weights = 1/2, 1/2\n\
         mixture.ft.weights = 1\nmixture.ft.aggregator = sum\nmixture.ft.idf = true\n\
         mixture.lm.weights = 0, 1/2, 1/2\nmixture.lm.aggregator = average\nmixture.lm.idf = false\n",
    )
    .unwrap();
    let spec_ctx = root.join("ctx.spec");
    fs::write(
        &spec_ctx,
        "ensemble.aggregator = sum\nensemble.weights = 1, 1\n\
         mixture.ft.weights = 1\nmixture.ft.aggregator = sum\nmixture.ft.idf = true\n\
         mixture.ctx.weights = 1/4, 3/4\nmixture.ctx.aggregator = concatenate\nmixture.ctx.idf = false\n",
    )
    .unwrap();

    let paths = |stores: BTreeMap<String, PathBuf>, spec: PathBuf| PipelinePaths {
        corpus: corpus.clone(),
        qa_pairs: qa.clone(),
        stores,
        spec,
        idf: None,
        idf_source: Default::default(),
    };
    DiskFixture {
        root: root.to_path_buf(),
        context_free: paths(BTreeMap::from([("ft".into(), ft.clone()), ("lm".into(), lm)]), spec_cf),
        contextual: paths(BTreeMap::from([("ft".into(), ft), ("ctx".into(), ctx)]), spec_ctx),
    }
}

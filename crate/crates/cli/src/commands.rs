use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use convrr::corpus::{build_idf, load_corpus, tokenize, IdfTable};
use convrr::embedding::{compose_text, parse_ensemble_spec_file, write_mrt, ContextualText};
use convrr::model::{read_checkpoint, train, write_checkpoint, Encoder, IterationStats};
use convrr::pipeline::{load_stores, Pipeline};
use convrr::retrieval::{evaluate, search, RetrievalIndex};

use crate::config::{check_ks, RunConfig};
use crate::{Cli, Command, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            Some(cfg)
        }
        None => None,
    };
    let need = |what: &str| {
        config
            .clone()
            .ok_or_else(|| anyhow!("`{what}` needs --config"))
    };
    match cli.command {
        Command::BuildIdf { corpus, out } => {
            let corpus = match corpus {
                Some(c) => c,
                None => need("build-idf without --corpus")?.paths.corpus,
            };
            build_idf_cmd(&corpus, &out)
        }
        Command::Compose { spec, stores, texts, idf, out } => {
            let (spec, stores, texts, idf) = match (spec, stores.is_empty(), texts) {
                (Some(s), false, Some(t)) => (s, stores.into_iter().collect(), t, idf),
                (spec, _, texts) => {
                    let cfg = need("compose without --spec, --store and --texts")?;
                    let stores = if stores.is_empty() { cfg.paths.stores } else { stores.into_iter().collect() };
                    (
                        spec.unwrap_or(cfg.paths.spec),
                        stores,
                        texts.unwrap_or(cfg.paths.corpus),
                        idf.or(cfg.paths.idf),
                    )
                }
            };
            compose_cmd(&spec, &stores, &texts, idf.as_deref(), &out)
        }
        Command::Train(args) => {
            let mut cfg = need("train")?;
            apply_train_args(&mut cfg, &args);
            cfg.validate()?;
            train_cmd(&cfg)
        }
        Command::Index { out } => {
            let cfg = need("index")?;
            cfg.validate()?;
            let out = out.or(cfg.index.clone()).ok_or_else(|| anyhow!("no index path: pass --out or set `index`"))?;
            index_cmd(&cfg, &out)
        }
        Command::Search { query, k, index, checkpoint } => {
            let cfg = need("search")?;
            cfg.validate()?;
            let index = index.or(cfg.index.clone()).ok_or_else(|| anyhow!("no index path: pass --index or set `index`"))?;
            let checkpoint = checkpoint.unwrap_or(cfg.checkpoint.clone());
            search_cmd(&cfg, &checkpoint, &index, &query, k)
        }
        Command::Eval { k, out } => {
            let mut cfg = need("eval")?;
            if let Some(k) = k {
                cfg.ks = k;
            }
            cfg.validate()?;
            let out = out.or(cfg.report.clone()).ok_or_else(|| anyhow!("no report path: pass --out or set `report`"))?;
            eval_cmd(&cfg, &out)
        }
    }
}

fn apply_train_args(cfg: &mut RunConfig, a: &TrainArgs) {
    let h = &mut cfg.train;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { h.$field = v; })* };
    }
    set!(margin => margin, ws => window, sf => scale, lr => learning_rate, weight_decay => weight_decay,
         batch => batch_size, iters => iterations, depth => depth, mining => mining, encoder => encoder);
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Holds an exclusive advisory lock on `<path>.lock` while replacing `path`.
fn write_locked(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut lock_name = path.as_os_str().to_owned();
    lock_name.push(".lock");
    let lock_path = PathBuf::from(lock_name);
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .with_context(|| format!("opening lock {}", lock_path.display()))?;
    lock.lock().with_context(|| format!("locking {}", lock_path.display()))?;
    let result = write_atomic(path, bytes);
    lock.unlock()?;
    result
}

fn load_encoder(path: &Path) -> Result<Encoder> {
    let bytes = fs::read(path).map_err(|e| convrr::Error::Io { path: path.into(), source: e })?;
    read_checkpoint(&bytes).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn build_idf_cmd(corpus: &Path, out: &Path) -> Result<()> {
    let docs = load_corpus(corpus)?;
    let table = build_idf(&docs)?;
    table.save_tsv(out)?;
    println!("{} terms over {} documents -> {}", table.len(), table.num_documents(), out.display());
    Ok(())
}

fn compose_cmd(
    spec: &Path,
    stores: &std::collections::BTreeMap<String, PathBuf>,
    texts: &Path,
    idf: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let spec = parse_ensemble_spec_file(spec)?;
    let stores = load_stores(stores)?;
    let docs = load_corpus(texts)?;
    let idf = match idf {
        Some(p) => IdfTable::load_tsv(p)?,
        None => build_idf(&docs)?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, doc) in docs.iter().enumerate() {
        let id = i as u32;
        let m = compose_text(&tokenize(&doc.text), Some(id), &stores, &spec, &idf)
            .with_context(|| format!("composing text `{}`", doc.id))?;
        let values = m.as_tensor().data().iter().map(|&x| x as f32).collect();
        let text = ContextualText::new(id, m.num_tokens(), 1, m.dim(), values)?;
        let mut bytes = Vec::new();
        write_mrt(&text, &mut bytes)?;
        write_atomic(&out.join(format!("{i:06}.mrt")), &bytes)?;
    }
    println!("composed {} texts -> {}", docs.len(), out.display());
    Ok(())
}

fn loss_csv(trace: &[IterationStats]) -> String {
    let mut s = String::from("iteration,mean_loss,active_triplet_fraction\n");
    for t in trace {
        s += &format!("{},{},{}\n", t.iteration, t.mean_loss, t.active_fraction);
    }
    s
}

fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let p = Pipeline::load(&cfg.paths)?;
    let docs = p.compose_documents()?;
    let queries = p.compose_queries()?;
    let set = p.training_set(&docs, &queries)?;
    let out = train(&set, &cfg.train.train_config(cfg.seed))?;
    write_locked(&cfg.checkpoint, &write_checkpoint(&out.encoder))?;
    let trace_path = cfg.loss_trace_path();
    write_atomic(&trace_path, loss_csv(&out.trace).as_bytes())?;
    let last = out.trace.last().expect("at least one iteration");
    println!(
        "trained {} iterations, final mean loss {} -> {}",
        last.iteration,
        last.mean_loss,
        cfg.checkpoint.display()
    );
    Ok(())
}

fn index_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let encoder = load_encoder(&cfg.checkpoint)?;
    let p = Pipeline::load(&cfg.paths)?;
    let docs = p.compose_documents()?;
    let index = convrr::retrieval::encode_index(&encoder, &docs)?;
    let mut bytes = Vec::new();
    index.write(&mut bytes)?;
    write_atomic(out, &bytes)?;
    println!("indexed {} documents -> {}", index.len(), out.display());
    Ok(())
}

fn search_cmd(cfg: &RunConfig, checkpoint: &Path, index: &Path, query: &str, k: usize) -> Result<()> {
    if k == 0 {
        bail!("k must be at least 1");
    }
    let encoder = load_encoder(checkpoint)?;
    let bytes = fs::read(index).map_err(|e| convrr::Error::Io { path: index.into(), source: e })?;
    let index = RetrievalIndex::read(&mut bytes.as_slice()).with_context(|| format!("reading index {}", index.display()))?;
    let spec = parse_ensemble_spec_file(&cfg.paths.spec)?;
    let stores = load_stores(&cfg.paths.stores)?;
    let idf = match &cfg.paths.idf {
        Some(p) => IdfTable::load_tsv(p)?,
        None => build_idf(&load_corpus(&cfg.paths.corpus)?)?,
    };
    let text = compose_text(&tokenize(query), None, &stores, &spec, &idf)?;
    let v = encoder.encode(&text)?;
    let mut out = std::io::stdout().lock();
    for (rank, hit) in search(&index, &v, k)?.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", rank + 1, hit.doc_id, hit.distance)?;
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    check_ks(&cfg.ks)?;
    let encoder = load_encoder(&cfg.checkpoint)?;
    let p = Pipeline::load(&cfg.eval_paths())?;
    let docs = p.compose_documents()?;
    let queries = p.compose_queries()?;
    let report = evaluate(&encoder, &queries, &docs, &cfg.ks)?;
    let json = report.to_json();
    write_atomic(out, json.as_bytes())?;
    print!("{json}");
    Ok(())
}


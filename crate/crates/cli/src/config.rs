//! The TOML run configuration shared by `train`, `index`, `search` and `eval`.
//!
//! ```toml
//! seed = 0
//! ks = [1, 3, 5]
//! checkpoint = "out/model.crr"
//! report = "out/report.json"
//!
//! [paths]
//! corpus = "corpus.jsonl"
//! qa_pairs = "train.jsonl"
//! spec = "best.spec"
//! [paths.stores]
//! fasttext = "ft.mre"
//!
//! [train]
//! iterations = 400
//! mining = "batch-hard"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use convrr::model::{EncoderConfig, EncoderKind, LossConfig, Mining, TrainConfig};
use convrr::numerics::AdamConfig;
use convrr::pipeline::PipelinePaths;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub encoder: EncoderKind,
    pub iterations: usize,
    pub batch_size: usize,
    pub margin: f64,
    pub window: usize,
    pub scale: f64,
    pub depth: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mining: Mining,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            encoder: t.encoder.kind,
            iterations: t.iterations,
            batch_size: t.batch_size,
            margin: t.loss.margin,
            window: t.encoder.window,
            scale: t.encoder.scale,
            depth: t.encoder.depth,
            learning_rate: t.adam.learning_rate,
            weight_decay: t.adam.weight_decay,
            mining: t.mining,
        }
    }
}

impl Hyperparameters {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            seed,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                weight_decay: self.weight_decay,
                ..Default::default()
            },
            mining: self.mining,
            loss: LossConfig { margin: self.margin },
            encoder: EncoderConfig {
                kind: self.encoder,
                depth: self.depth,
                window: self.window,
                scale: self.scale,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PipelinePaths,
    /// QA pairs for `eval`; the training pairs when absent.
    #[serde(default)]
    pub eval_qa_pairs: Option<PathBuf>,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Loss trace CSV; next to the checkpoint when absent.
    #[serde(default)]
    pub loss_trace: Option<PathBuf>,
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub train: Hyperparameters,
}

fn default_ks() -> Vec<usize> {
    vec![1, 3, 5]
}

pub fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        bail!("k list {ks:?} must be non-empty, positive and strictly ascending");
    }
    Ok(())
}

fn must_exist(label: &str, path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("{label} {} does not exist", path.display());
    }
    Ok(())
}

fn parent_must_exist(label: &str, path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => must_exist(&format!("directory for {label}"), p),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.corpus);
        fix(&mut paths.qa_pairs);
        fix(&mut paths.spec);
        paths.stores.values_mut().for_each(fix);
        paths.idf.iter_mut().for_each(fix);
        self.eval_qa_pairs.iter_mut().for_each(fix);
        fix(&mut self.checkpoint);
        self.report.iter_mut().for_each(fix);
        self.loss_trace.iter_mut().for_each(fix);
        self.index.iter_mut().for_each(fix);
    }

    /// Checks that every input exists and every output has a directory to go to.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        must_exist("corpus", &p.corpus)?;
        must_exist("QA pairs", &p.qa_pairs)?;
        must_exist("spec file", &p.spec)?;
        if p.stores.is_empty() {
            bail!("no embedding stores configured");
        }
        for (model, store) in &p.stores {
            must_exist(&format!("store for model `{model}`"), store)?;
        }
        if let Some(idf) = &p.idf {
            must_exist("IDF table", idf)?;
        }
        if let Some(qa) = &self.eval_qa_pairs {
            must_exist("evaluation QA pairs", qa)?;
        }
        parent_must_exist("checkpoint", &self.checkpoint)?;
        for out in [&self.report, &self.loss_trace, &self.index].into_iter().flatten() {
            parent_must_exist("output", out)?;
        }
        check_ks(&self.ks)?;
        self.train.train_config(self.seed).validate()?;
        Ok(())
    }

    pub fn loss_trace_path(&self) -> PathBuf {
        self.loss_trace.clone().unwrap_or_else(|| self.checkpoint.with_extension("loss.csv"))
    }

    pub fn eval_paths(&self) -> PipelinePaths {
        let mut p = self.paths.clone();
        if let Some(qa) = &self.eval_qa_pairs {
            p.qa_pairs = qa.clone();
        }
        p
    }
}

//! `convrr`: IDF tables, embedding composition, training, indexing, search
//! and evaluation from the command line.
//!
//! Exit codes: 0 success, 1 internal error, 2 user or input error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convrr::model::{EncoderKind, Mining};

#[derive(Debug, Parser)]
#[command(name = "convrr", version, about = "Multi-resolution embeddings and residual retrieval encoders")]
pub struct Cli {
    /// Seed for every random choice; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count document frequencies over a JSONL corpus and write an IDF TSV.
    BuildIdf {
        /// Corpus JSONL; the config's corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose every text of a JSONL file into one MRT1 file per text.
    Compose {
        /// Spec file; the config's spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// `MODEL=PATH`, repeatable; the config's stores when omitted.
        #[arg(long = "store", value_parser = parse_store)]
        stores: Vec<(String, PathBuf)>,
        /// `{"id", "text"}` JSONL; the config's corpus when omitted.
        #[arg(long)]
        texts: Option<PathBuf>,
        /// IDF TSV; built from the texts when omitted.
        #[arg(long)]
        idf: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder and write its checkpoint and loss trace.
    Train(TrainArgs),
    /// Encode the corpus with a checkpoint and write a RIX1 index.
    Index {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank indexed documents for a query text.
    Search {
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Report recall@k of a checkpoint as JSON.
    Eval {
        /// Comma-separated, ascending.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub margin: Option<f64>,
    /// Convolution window size.
    #[arg(long)]
    pub ws: Option<usize>,
    /// Residual scale factor.
    #[arg(long)]
    pub sf: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_parser = parse_mining)]
    pub mining: Option<Mining>,
    #[arg(long, value_parser = parse_encoder)]
    pub encoder: Option<EncoderKind>,
}

fn parse_store(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((model, path)) if !model.is_empty() && !path.is_empty() => Ok((model.to_string(), path.into())),
        _ => Err(format!("expected MODEL=PATH, got {s:?}")),
    }
}

fn parse_mining(s: &str) -> Result<Mining, String> {
    s.parse()
}

fn parse_encoder(s: &str) -> Result<EncoderKind, String> {
    match s {
        "convrr" => Ok(EncoderKind::Convrr),
        "fcrr" => Ok(EncoderKind::Fcrr),
        other => Err(format!("unknown encoder {other:?}")),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err
        .chain()
        .filter_map(|e| e.downcast_ref::<convrr::Error>())
        .any(|e| !e.is_user_error());
    if internal {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

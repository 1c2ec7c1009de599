//! Line-oriented `key = value` configuration for [`EnsembleSpec`].
//!
//! ```text
//! # blank lines and '#' comments are ignored
//! ensemble.aggregator = concatenate
//! ensemble.weights    = 1/3, 1/3, 1/3
//! mixture.bert.weights    = 1/4, 1/4, 1/4, 1/4, 0, 0, 0, 0, 0, 0, 0, 0
//! mixture.bert.aggregator = concatenate
//! mixture.bert.idf        = false
//! mixture.bert.scale_segments = true   # optional, default true
//! ```
//!
//! Mixtures are ordered by the first line that mentions them. Reals may be
//! written as fractions (`1/3`).

use std::collections::BTreeMap;
use std::path::Path;

use super::{Aggregator, EnsembleSpec, MixtureSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    column: usize,
    value: String,
}

struct Ctx<'a> {
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, line: usize, column: usize, message: impl std::fmt::Display) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            line,
            message: format!("column {column}: {message}"),
        }
    }

    fn real(&self, text: &str, line: usize, column: usize) -> Result<f64> {
        let parsed = match text.split_once('/') {
            Some((num, den)) => num
                .trim()
                .parse::<f64>()
                .ok()
                .zip(den.trim().parse::<f64>().ok())
                .filter(|(_, d)| *d != 0.0)
                .map(|(n, d)| n / d),
            None => text.parse::<f64>().ok(),
        };
        parsed
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(line, column, format!("invalid number {text:?}")))
    }

    fn reals(&self, e: &Entry) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut offset = 0;
        for piece in e.value.split(',') {
            let lead = piece.len() - piece.trim_start().len();
            let item = piece.trim();
            if item.is_empty() {
                return Err(self.err(e.line, e.column + offset, "empty array element"));
            }
            out.push(self.real(item, e.line, e.column + offset + lead)?);
            offset += piece.len() + 1;
        }
        Ok(out)
    }

    fn aggregator(&self, e: &Entry) -> Result<Aggregator> {
        e.value.parse().map_err(|m: String| self.err(e.line, e.column, m))
    }

    fn boolean(&self, e: &Entry) -> Result<bool> {
        match e.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.err(e.line, e.column, format!("expected true or false, got {other:?}"))),
        }
    }
}

pub fn parse_ensemble_spec(source_name: &str, content: &str) -> Result<EnsembleSpec> {
    let ctx = Ctx { source: source_name };
    let mut ensemble: BTreeMap<String, Entry> = BTreeMap::new();
    let mut mixtures: Vec<(String, BTreeMap<String, Entry>)> = Vec::new();

    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let Some(eq) = body.find('=') else {
            let col = body.len() - body.trim_start().len() + 1;
            return Err(ctx.err(line, col, "expected key = value"));
        };
        let key = body[..eq].trim();
        let after = &body[eq + 1..];
        let value = after.trim();
        let column = eq + 2 + (after.len() - after.trim_start().len());
        let key_col = body.len() - body.trim_start().len() + 1;
        if value.is_empty() {
            return Err(ctx.err(line, column, format!("missing value for `{key}`")));
        }
        let entry = Entry {
            line,
            column,
            value: value.to_string(),
        };
        let parts: Vec<&str> = key.split('.').collect();
        let (table, field) = match parts[..] {
            ["ensemble", field] => (&mut ensemble, field),
            ["mixture", model, field] if !model.is_empty() => {
                let pos = match mixtures.iter().position(|(id, _)| id == model) {
                    Some(p) => p,
                    None => {
                        mixtures.push((model.to_string(), BTreeMap::new()));
                        mixtures.len() - 1
                    }
                };
                (&mut mixtures[pos].1, field)
            }
            _ => return Err(ctx.err(line, key_col, format!("unknown key `{key}`"))),
        };
        let allowed: &[&str] = if parts[0] == "ensemble" {
            &["aggregator", "weights"]
        } else {
            &["weights", "aggregator", "idf", "scale_segments"]
        };
        if !allowed.contains(&field) {
            return Err(ctx.err(line, key_col, format!("unknown key `{key}`")));
        }
        if let Some(prev) = table.get(field) {
            return Err(ctx.err(line, key_col, format!("`{key}` already set on line {}", prev.line)));
        }
        table.insert(field.to_string(), entry);
    }

    let last_line = content.lines().count().max(1);
    let require = |table: &BTreeMap<String, Entry>, field: &str, key: &str| -> Result<Entry> {
        table
            .get(field)
            .cloned()
            .ok_or_else(|| ctx.err(last_line, 1, format!("missing required key `{key}`")))
    };

    if mixtures.is_empty() {
        return Err(ctx.err(last_line, 1, "no mixture.<model>.* keys"));
    }
    let mut specs = Vec::with_capacity(mixtures.len());
    for (model, table) in &mixtures {
        let w = require(table, "weights", &format!("mixture.{model}.weights"))?;
        let a = require(table, "aggregator", &format!("mixture.{model}.aggregator"))?;
        let weights = ctx.reals(&w)?;
        let aggregator = ctx.aggregator(&a)?;
        let use_idf = match table.get("idf") {
            Some(e) => ctx.boolean(e)?,
            None => false,
        };
        let scale = match table.get("scale_segments") {
            Some(e) => ctx.boolean(e)?,
            None => true,
        };
        let spec = MixtureSpec::new(model.clone(), weights, aggregator, use_idf)
            .map_err(|e| ctx.err(w.line, w.column, e))?
            .with_scaled_segments(scale);
        specs.push(spec);
    }
    let a = require(&ensemble, "aggregator", "ensemble.aggregator")?;
    let aggregator = ctx.aggregator(&a)?;
    let (raw, line, column) = match ensemble.get("weights") {
        Some(w) => (ctx.reals(w)?, w.line, w.column),
        None => (vec![1.0; specs.len()], last_line, 1),
    };
    EnsembleSpec::new(specs, raw, aggregator).map_err(|e| ctx.err(line, column, e))
}

pub fn parse_ensemble_spec_file(path: &Path) -> Result<EnsembleSpec> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ensemble_spec(&path.display().to_string(), &content)
}

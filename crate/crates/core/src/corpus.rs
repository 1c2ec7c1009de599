//! Tokenization, document-frequency statistics and QA pair loading.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub query_id: String,
    pub query_text: String,
    pub positive_doc_id: String,
    /// Optional per-question candidate list; evaluation restricts the search
    /// to these documents when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
}

/// Lowercases and splits on anything that is not alphanumeric. Punctuation is
/// dropped, so `"C++"` becomes `"c"`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Which texts document frequencies are counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfSource {
    #[default]
    Documents,
    Queries,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdfEntry {
    pub df: u32,
    pub idf: f64,
}

/// `idf(w) = ln(N / df_w)` where `df_w` counts documents containing `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    num_documents: u32,
    entries: BTreeMap<String, IdfEntry>,
}

impl IdfTable {
    pub fn num_documents(&self) -> u32 {
        self.num_documents
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&IdfEntry> {
        self.entries.get(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IdfEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Stored IDF, or `ln(N/1)` for tokens never seen.
    pub fn lookup(&self, token: &str) -> f64 {
        self.entries
            .get(token)
            .map_or_else(|| (self.num_documents as f64).ln(), |e| e.idf)
    }

    /// Writes the `#N=<n>` header followed by `token\tdf\tidf` rows in token order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#N={}", self.num_documents)?;
        for (token, e) in &self.entries {
            writeln!(out, "{token}\t{}\t{}", e.df, e.idf)?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn parse_tsv(source_name: &str, content: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing #N= header".into()))?;
        let num_documents: u32 = header
            .strip_prefix("#N=")
            .and_then(|n| n.parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, df, idf] = fields[..] else {
                return Err(parse_err(lineno, "expected token<TAB>df<TAB>idf".into()));
            };
            let df: u32 = df
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad df {df:?}")))?;
            let idf: f64 = idf
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad idf {idf:?}")))?;
            if df == 0 || df > num_documents {
                return Err(parse_err(lineno, format!("df {df} outside 1..={num_documents}")));
            }
            entries.insert(token.to_string(), IdfEntry { df, idf });
        }
        Ok(Self {
            num_documents,
            entries,
        })
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&path.display().to_string(), &content)
    }
}

/// Document frequencies over already-tokenized texts; each text counts once per token.
pub fn build_idf_from_texts<'a, I>(texts: I) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    let mut n = 0u32;
    for text in texts {
        n += 1;
        let unique: BTreeSet<String> = tokenize(text).into_iter().collect();
        for token in unique {
            *df.entry(token).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let total = n as f64;
    let entries = df
        .into_iter()
        .map(|(token, df)| {
            let idf = (total / df as f64).ln();
            (token, IdfEntry { df, idf })
        })
        .collect();
    Ok(IdfTable {
        num_documents: n,
        entries,
    })
}

pub fn build_idf(corpus: &[Document]) -> Result<IdfTable> {
    build_idf_from_texts(corpus.iter().map(|d| d.text.as_str()))
}

pub fn lookup_idf(table: &IdfTable, token: &str) -> f64 {
    table.lookup(token)
}

fn read_lines(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn nonblank_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_corpus(source_name: &str, content: &str) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line, text) in nonblank_lines(content) {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: e.to_string(),
        })?;
        if doc.id.is_empty() {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line,
                message: "empty document id".into(),
            });
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Reads a JSONL corpus of `{"id": .., "text": ..}` objects.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    parse_corpus(&path.display().to_string(), &read_lines(path)?)
}

pub fn parse_qa_pairs(source_name: &str, content: &str, corpus: &[Document]) -> Result<Vec<QaPair>> {
    let ids: HashSet<&str> = corpus.iter().map(|d| d.id.as_str()).collect();
    let mut pairs = Vec::new();
    for (line, text) in nonblank_lines(content) {
        let pair: QaPair = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: e.to_string(),
        })?;
        let dangling = std::iter::once(&pair.positive_doc_id)
            .chain(pair.candidates.iter().flatten())
            .find(|id| !ids.contains(id.as_str()));
        if let Some(id) = dangling {
            return Err(Error::Integrity(format!(
                "{source_name}:{line}: document `{id}` is not in the corpus"
            )));
        }
        if let Some(c) = &pair.candidates {
            if !c.contains(&pair.positive_doc_id) {
                return Err(Error::Integrity(format!(
                    "{source_name}:{line}: candidates of `{}` omit its positive document",
                    pair.query_id
                )));
            }
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Reads JSONL `{"query_id", "query_text", "positive_doc_id"}` records and
/// checks every referenced document exists in `corpus`.
pub fn load_qa_pairs(path: &Path, corpus: &[Document]) -> Result<Vec<QaPair>> {
    parse_qa_pairs(&path.display().to_string(), &read_lines(path)?, corpus)
}

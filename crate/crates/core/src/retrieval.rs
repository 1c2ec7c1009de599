//! Exact nearest-neighbour search over encoded documents and recall@k.
//!
//! Search is a linear scan, `O(|index| · d″)` per query. Results are ordered
//! by ascending squared Euclidean distance with ties broken by insertion order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{read_magic, TextMatrix};
use crate::error::{Error, Result};
use crate::model::{pair_distance, Encoder};
use crate::numerics::Tensor;

pub const INDEX_MAGIC: [u8; 4] = *b"RIX1";
const INDEX_VERSION: u16 = 1;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    ids: Vec<String>,
    vectors: Vec<Tensor>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &Tensor {
        &self.vectors[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|d| d == id)
    }

    /// `RIX1 | u16 version | u32 n | u32 d`, then per entry
    /// `u32 byte_len | utf8 id | d f32`, little-endian.
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_u16::<LittleEndian>(INDEX_VERSION)?;
        w.write_u32::<LittleEndian>(self.len() as u32)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            w.write_u32::<LittleEndian>(id.len() as u32)?;
            w.write_all(id.as_bytes())?;
            for &x in v.data() {
                w.write_f32::<LittleEndian>(x as f32)?;
            }
        }
        Ok(())
    }

    /// Reads an index; vectors are renormalized after the `f32` round trip.
    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "RIX1 index";
        let eof = |e: std::io::Error| Error::format(WHAT, format!("truncated payload ({e})"));
        read_magic(r, INDEX_MAGIC, WHAT)?;
        let version = r.read_u16::<LittleEndian>().map_err(eof)?;
        if version != INDEX_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let n = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let d = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let mut docs = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(eof)?;
            let id = String::from_utf8(bytes).map_err(|_| Error::format(WHAT, "id is not UTF-8"))?;
            let mut values = vec![0f32; d];
            r.read_f32_into::<LittleEndian>(&mut values).map_err(eof)?;
            let v = Tensor::new(vec![d], values.into_iter().map(f64::from).collect())?;
            docs.push((id, crate::numerics::l2_normalize(&v)?));
        }
        build_index(docs)
    }
}

/// Keeps insertion order, which is the tie-break authority for search.
pub fn build_index(docs: Vec<(String, Tensor)>) -> Result<RetrievalIndex> {
    let first = docs.first().ok_or(Error::EmptyIndex)?;
    let dim = first.1.len();
    let mut seen = HashSet::new();
    let mut ids = Vec::with_capacity(docs.len());
    let mut vectors = Vec::with_capacity(docs.len());
    for (id, v) in docs {
        if v.rank() != 1 || v.len() != dim {
            return Err(Error::Shape(format!(
                "document `{id}` has shape {:?}, index width is {dim}",
                v.shape()
            )));
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Contract(format!("document `{id}` has norm {norm}, expected 1")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        ids.push(id);
        vectors.push(v);
    }
    Ok(RetrievalIndex { ids, vectors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub distance: f64,
}

fn ranked_positions(index: &RetrievalIndex, query: &Tensor, subset: Option<&[usize]>, k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if query.shape() != [index.dim()] {
        return Err(Error::Shape(format!(
            "query shape {:?} does not match index width {}",
            query.shape(),
            index.dim()
        )));
    }
    let mut scored: Vec<(usize, f64)> = match subset {
        Some(s) => s
            .iter()
            .map(|&i| pair_distance(query, &index.vectors[i]).map(|d| (i, d)))
            .collect::<Result<_>>()?,
        None => index
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| pair_distance(query, v).map(|d| (i, d)))
            .collect::<Result<_>>()?,
    };
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    Ok(scored)
}

/// Top-`min(k, |index|)` documents by ascending distance.
pub fn search(index: &RetrievalIndex, query: &Tensor, k: usize) -> Result<Vec<SearchHit>> {
    Ok(ranked_positions(index, query, None, k)?
        .into_iter()
        .map(|(i, distance)| SearchHit {
            doc_id: index.ids[i].clone(),
            distance,
        })
        .collect())
}

/// Like [`search`] but restricted to the listed document ids.
pub fn search_candidates(index: &RetrievalIndex, query: &Tensor, candidates: &[String], k: usize) -> Result<Vec<SearchHit>> {
    let positions = candidates
        .iter()
        .map(|id| {
            index
                .position(id)
                .ok_or_else(|| Error::Integrity(format!("candidate `{id}` is not in the index")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ranked_positions(index, query, Some(&positions), k)?
        .into_iter()
        .map(|(i, distance)| SearchHit {
            doc_id: index.ids[i].clone(),
            distance,
        })
        .collect())
}

/// Fraction of queries whose gold document is among their first `k` ids.
pub fn recall_at_k(rankings: &[(String, Vec<String>)], gold: &HashMap<String, String>, k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptyInput("no queries to evaluate"));
    }
    let mut hits = 0usize;
    for (query, ranked) in rankings {
        let g = gold
            .get(query)
            .ok_or_else(|| Error::Integrity(format!("query `{query}` has no gold document")))?;
        if ranked.iter().take(k).any(|d| d == g) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_queries: usize,
    pub recall: BTreeMap<usize, f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }
}

/// One evaluation query: its text, gold document and optional candidate list.
#[derive(Debug, Clone)]
pub struct EvalQuery {
    pub id: String,
    pub text: TextMatrix,
    pub gold: String,
    pub candidates: Option<Vec<String>>,
}

/// Encodes documents into an index with `encoder`.
pub fn encode_index(encoder: &Encoder, docs: &[(String, TextMatrix)]) -> Result<RetrievalIndex> {
    let encoded = docs
        .par_iter()
        .map(|(id, text)| encoder.encode(text).map(|v| (id.clone(), v)))
        .collect::<Result<Vec<_>>>()?;
    build_index(encoded)
}

/// Ranked ids per query, searched to depth `depth`.
pub fn rank_queries(encoder: &Encoder, index: &RetrievalIndex, queries: &[EvalQuery], depth: usize) -> Result<Vec<(String, Vec<String>)>> {
    queries
        .par_iter()
        .map(|q| {
            let v = encoder.encode(&q.text)?;
            let hits = match &q.candidates {
                Some(c) => search_candidates(index, &v, c, depth)?,
                None => search(index, &v, depth)?,
            };
            Ok((q.id.clone(), hits.into_iter().map(|h| h.doc_id).collect()))
        })
        .collect()
}

/// Encodes queries and documents with the same encoder and reports recall
/// at each `k`. Queries carrying candidate lists are searched within them.
pub fn evaluate(encoder: &Encoder, queries: &[EvalQuery], docs: &[(String, TextMatrix)], ks: &[usize]) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(format!("invalid k list {ks:?}")));
    }
    let index = encode_index(encoder, docs)?;
    let depth = *ks.iter().max().expect("non-empty");
    let rankings = rank_queries(encoder, &index, queries, depth)?;
    let gold: HashMap<String, String> = queries.iter().map(|q| (q.id.clone(), q.gold.clone())).collect();
    if gold.len() != queries.len() {
        return Err(Error::Integrity("duplicate query ids".into()));
    }
    let recall = ks
        .iter()
        .map(|&k| recall_at_k(&rankings, &gold, k).map(|r| (k, r)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        num_queries: queries.len(),
        recall,
    })
}

//! Loading a corpus, QA pairs, embedding stores and a mixture spec, and
//! composing every document and query into a text matrix.
//!
//! Contextual stores key texts by id: document `i` of the corpus file is
//! text `i`, and QA pair `j` is text `num_documents + j`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_idf_from_texts, load_corpus, load_qa_pairs, tokenize, Document, IdfSource, IdfTable, QaPair};
use crate::embedding::{compose_text, parse_ensemble_spec_file, EmbeddingStore, EmbeddingStores, EnsembleSpec, TextMatrix};
use crate::error::{Error, Result};
use crate::model::TrainingSet;
use crate::retrieval::EvalQuery;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePaths {
    pub corpus: PathBuf,
    pub qa_pairs: PathBuf,
    /// Model id to `MRE1` file or directory of `MRT1` files.
    pub stores: BTreeMap<String, PathBuf>,
    pub spec: PathBuf,
    /// Precomputed IDF table; built from `idf_source` when absent.
    #[serde(default)]
    pub idf: Option<PathBuf>,
    #[serde(default)]
    pub idf_source: IdfSource,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub corpus: Vec<Document>,
    pub qa: Vec<QaPair>,
    pub stores: EmbeddingStores,
    pub spec: EnsembleSpec,
    pub idf: IdfTable,
}

pub fn load_stores(paths: &BTreeMap<String, PathBuf>) -> Result<EmbeddingStores> {
    let mut stores = EmbeddingStores::default();
    for (model, path) in paths {
        stores.insert(model.clone(), EmbeddingStore::load(path)?);
    }
    Ok(stores)
}

pub fn idf_for(source: IdfSource, corpus: &[Document], qa: &[QaPair]) -> Result<IdfTable> {
    let docs = corpus.iter().map(|d| d.text.as_str());
    let queries = qa.iter().map(|q| q.query_text.as_str());
    match source {
        IdfSource::Documents => build_idf_from_texts(docs),
        IdfSource::Queries => build_idf_from_texts(queries),
        IdfSource::Union => build_idf_from_texts(docs.chain(queries)),
    }
}

impl Pipeline {
    pub fn load(paths: &PipelinePaths) -> Result<Self> {
        let corpus = load_corpus(&paths.corpus)?;
        let qa = load_qa_pairs(&paths.qa_pairs, &corpus)?;
        let spec = parse_ensemble_spec_file(&paths.spec)?;
        let stores = load_stores(&paths.stores)?;
        let idf = match &paths.idf {
            Some(p) => IdfTable::load_tsv(p)?,
            None => idf_for(paths.idf_source, &corpus, &qa)?,
        };
        Ok(Self {
            corpus,
            qa,
            stores,
            spec,
            idf,
        })
    }

    pub fn doc_text_id(&self, i: usize) -> u32 {
        i as u32
    }

    pub fn query_text_id(&self, j: usize) -> u32 {
        (self.corpus.len() + j) as u32
    }

    fn compose(&self, label: &str, text: &str, text_id: u32) -> Result<TextMatrix> {
        let tokens = tokenize(text);
        compose_text(&tokens, Some(text_id), &self.stores, &self.spec, &self.idf).map_err(|e| match e {
            Error::EmptyText => Error::Dataset(format!("{label}: no token has an embedding in any model")),
            other => other,
        })
    }

    pub fn compose_documents(&self) -> Result<Vec<(String, TextMatrix)>> {
        self.corpus
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let m = self.compose(&format!("document {}", d.id), &d.text, self.doc_text_id(i))?;
                Ok((d.id.clone(), m))
            })
            .collect()
    }

    pub fn compose_queries(&self) -> Result<Vec<EvalQuery>> {
        self.qa
            .par_iter()
            .enumerate()
            .map(|(j, q)| {
                let text = self.compose(&format!("query {}", q.query_id), &q.query_text, self.query_text_id(j))?;
                Ok(EvalQuery {
                    id: q.query_id.clone(),
                    text,
                    gold: q.positive_doc_id.clone(),
                    candidates: q.candidates.clone(),
                })
            })
            .collect()
    }

    /// Composed documents and queries as a training set.
    pub fn training_set(&self, docs: &[(String, TextMatrix)], queries: &[EvalQuery]) -> Result<TrainingSet> {
        let position: HashMap<&str, usize> = docs.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
        let gold = queries
            .iter()
            .map(|q| {
                position
                    .get(q.gold.as_str())
                    .copied()
                    .ok_or_else(|| Error::Integrity(format!("query {} names unknown document {}", q.id, q.gold)))
            })
            .collect::<Result<Vec<_>>>()?;
        TrainingSet::new(
            docs.iter().map(|(id, _)| id.clone()).collect(),
            docs.iter().map(|(_, m)| m.clone()).collect(),
            queries.iter().map(|q| q.text.clone()).collect(),
            gold,
        )
    }
}

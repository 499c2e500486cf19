//! Okapi BM25 over an in-memory inverted index.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{EvidenceDoc, RetrievalError};
use crate::text::terms;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

pub const INDEX_FORMAT: &str = "attrib-bm25-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the document in [`Index::docs`].
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Index {
    format: String,
    version: u32,
    pub k1: f64,
    pub b: f64,
    pub corpus_size: usize,
    pub avg_doc_length: f64,
    /// Token count per document, parallel to `docs`.
    pub doc_length: Vec<usize>,
    pub postings: BTreeMap<String, Vec<Posting>>,
    docs: Vec<EvidenceDoc>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
}

pub fn build_index(docs: Vec<EvidenceDoc>, k1: f64, b: f64) -> Result<Index, RetrievalError> {
    if docs.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if !(k1 > 0.0 && k1.is_finite()) || !(0.0..=1.0).contains(&b) {
        return Err(RetrievalError::InvalidParams { k1, b });
    }
    let mut by_id = HashMap::with_capacity(docs.len());
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_length = Vec::with_capacity(docs.len());

    for (pos, doc) in docs.iter().enumerate() {
        if by_id.insert(doc.id.clone(), pos).is_some() {
            return Err(RetrievalError::DuplicateDoc(doc.id.clone()));
        }
        let tokens = terms(&doc.text);
        doc_length.push(tokens.len());
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting { doc: pos, tf: count });
        }
    }

    let corpus_size = docs.len();
    let avg_doc_length = doc_length.iter().sum::<usize>() as f64 / corpus_size as f64;
    Ok(Index {
        format: INDEX_FORMAT.to_string(),
        version: INDEX_VERSION,
        k1,
        b,
        corpus_size,
        avg_doc_length,
        doc_length,
        postings,
        docs,
        by_id,
    })
}

impl Index {
    pub fn docs(&self) -> &[EvidenceDoc] {
        &self.docs
    }

    pub fn doc(&self, id: &str) -> Option<&EvidenceDoc> {
        self.by_id.get(id).map(|&pos| &self.docs[pos])
    }

    /// Postings of `term` as `(doc id, term frequency)` pairs.
    pub fn postings_for(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| list.iter().map(|p| (self.docs[p.doc].id.as_str(), p.tf)).collect())
            .unwrap_or_default()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, len: usize) -> f64 {
        let tf = tf as f64;
        // An index of all-empty documents has avg length 0; every doc is then
        // exactly average.
        let rel_len = if self.avg_doc_length > 0.0 { len as f64 / self.avg_doc_length } else { 1.0 };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * rel_len))
    }

    /// BM25 score of one document. Repeated query terms contribute once per
    /// occurrence.
    pub fn bm25_score(&self, query: &str, doc_id: &str) -> Result<f64, RetrievalError> {
        let pos = *self.by_id.get(doc_id).ok_or_else(|| RetrievalError::UnknownDoc(doc_id.to_string()))?;
        let len = self.doc_length[pos];
        let mut score = 0.0;
        for term in terms(query) {
            if let Some(list) = self.postings.get(&term) {
                if let Some(p) = list.iter().find(|p| p.doc == pos) {
                    score += self.idf(list.len()) * self.term_weight(p.tf, len);
                }
            }
        }
        Ok(score)
    }

    /// Every document scored against `query`, best first, ties by id.
    pub fn score_all(&self, query: &str) -> Vec<(String, f64)> {
        let mut scores = vec![0.0f64; self.docs.len()];
        for term in terms(query) {
            if let Some(list) = self.postings.get(&term) {
                let idf = self.idf(list.len());
                for p in list {
                    scores[p.doc] += idf * self.term_weight(p.tf, self.doc_length[p.doc]);
                }
            }
        }
        let mut ranked: Vec<(String, f64)> = self.docs.iter().zip(scores).map(|(d, s)| (d.id.clone(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let json = serde_json::to_vec(self).expect("index serializes");
        fs::write(path, json).map_err(|source| RetrievalError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = fs::read(path).map_err(|source| RetrievalError::Io { path: path.to_path_buf(), source })?;
        let format_err = |message: String| RetrievalError::Format { what: "index", path: path.to_path_buf(), message };
        let mut index: Index = serde_json::from_slice(&bytes).map_err(|e| format_err(e.to_string()))?;
        if index.format != INDEX_FORMAT {
            return Err(format_err(format!("unexpected format tag '{}'", index.format)));
        }
        if index.version != INDEX_VERSION {
            return Err(format_err(format!(
                "index version {} is not supported (expected {INDEX_VERSION})",
                index.version
            )));
        }
        if index.doc_length.len() != index.docs.len() || index.corpus_size != index.docs.len() {
            return Err(format_err("document table sizes disagree".into()));
        }
        if index.postings.values().flatten().any(|p| p.doc >= index.docs.len()) {
            return Err(format_err("posting refers to a missing document".into()));
        }
        index.by_id = index.docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        Ok(index)
    }
}

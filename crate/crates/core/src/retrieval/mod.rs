//! BM25 evidence retrieval, non-evidence selection and simulated recall.

mod index;
mod simulate;

pub use index::{build_index, Index, Posting, DEFAULT_B, DEFAULT_K1, INDEX_FORMAT, INDEX_VERSION};
pub use simulate::{interpolate_recall, interpolate_recall_per_example, RecallPoint};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::corpus::Example;
use crate::metrics::split_sentences;
use crate::seed::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("invalid BM25 parameters: k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("duplicate document id '{0}'")]
    DuplicateDoc(String),
    #[error("evidence document '{0}' has no text")]
    EmptyDocument(String),
    #[error("unknown document id '{0}'")]
    UnknownDoc(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no non-golden document available for example '{0}'")]
    NoCandidate(String),
    #[error("recall fraction {0} is outside [0, 1]")]
    Domain(f64),
    #[error("per-example interpolation needs equally sized, id-aligned inputs: {0}")]
    Misaligned(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} at {path}: {message}")]
    Format { what: &'static str, path: PathBuf, message: String },
}

/// A retrievable passage. Sentences are computed once, at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub id: String,
    pub text: String,
    pub sentences: Vec<String>,
}

impl EvidenceDoc {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, RetrievalError> {
        let id = id.into();
        let text = text.into();
        let sentences = split_sentences(&text);
        if sentences.is_empty() {
            return Err(RetrievalError::EmptyDocument(id));
        }
        Ok(Self { id, text, sentences })
    }
}

/// How to pick a passage that is guaranteed not to be the golden evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonEvidenceMode {
    Random,
    NextBest,
}

impl NonEvidenceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NonEvidenceMode::Random => "random",
            NonEvidenceMode::NextBest => "next_best",
        }
    }
}

/// Top-k documents for `query`: descending score, ties by ascending doc id,
/// `min(k, corpus size)` entries.
pub fn retrieve_topk(index: &Index, query: &str, k: usize) -> Result<Vec<(String, f64)>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let mut ranked = index.score_all(query);
    ranked.truncate(k);
    Ok(ranked)
}

/// Pick a non-golden passage for `example`.
///
/// `Random` draws uniformly from the non-golden documents with an RNG seeded
/// from `seed` and the example id; `NextBest` takes the best BM25-ranked
/// non-golden document for the final query.
pub fn select_non_evidence<'a>(
    example: &Example,
    index: &'a Index,
    mode: NonEvidenceMode,
    seed: u64,
) -> Result<&'a EvidenceDoc, RetrievalError> {
    let golden = example.golden_evidence.id.as_str();
    match mode {
        NonEvidenceMode::Random => {
            let candidates: Vec<&EvidenceDoc> = index.docs().iter().filter(|d| d.id != golden).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["non-evidence", &example.id]));
            candidates.choose(&mut rng).copied().ok_or_else(|| RetrievalError::NoCandidate(example.id.clone()))
        }
        NonEvidenceMode::NextBest => index
            .score_all(&example.final_query.text)
            .into_iter()
            .find(|(id, _)| id != golden)
            .and_then(|(id, _)| index.doc(&id))
            .ok_or_else(|| RetrievalError::NoCandidate(example.id.clone())),
    }
}

/// Top-k passages for an example's final query. With `inject_golden`, a
/// list that misses the golden evidence gets it prepended (dropping the
/// lowest-ranked entry so the length stays `k`).
pub fn retrieve_for_example<'a>(
    example: &Example,
    index: &'a Index,
    k: usize,
    inject_golden: bool,
) -> Result<Vec<&'a EvidenceDoc>, RetrievalError> {
    let golden = example.golden_evidence.id.as_str();
    let mut docs: Vec<&EvidenceDoc> =
        retrieve_topk(index, &example.final_query.text, k)?.into_iter().filter_map(|(id, _)| index.doc(&id)).collect();
    if inject_golden && !docs.iter().any(|d| d.id == golden) {
        let golden_doc = index.doc(golden).ok_or_else(|| RetrievalError::UnknownDoc(golden.to_string()))?;
        if docs.len() == k {
            docs.pop();
        }
        docs.insert(0, golden_doc);
    }
    Ok(docs)
}

/// Fraction of examples whose golden evidence is among the top `k` hits.
pub fn recall_at_k(examples: &[Example], index: &Index, k: usize) -> Result<f64, RetrievalError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for ex in examples {
        let top = retrieve_topk(index, &ex.final_query.text, k)?;
        if top.iter().any(|(id, _)| *id == ex.golden_evidence.id) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

#[derive(Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
}

/// Reads a JSONL corpus of `{"id", "text"}` records; blank lines are skipped.
pub fn load_documents(path: &Path) -> Result<Vec<EvidenceDoc>, RetrievalError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| RetrievalError::Io { path: path.to_path_buf(), source })?;
    let mut docs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(line).map_err(|e| RetrievalError::Format {
            what: "document corpus",
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        docs.push(EvidenceDoc::new(rec.id, rec.text)?);
    }
    Ok(docs)
}

/// The distinct golden passages of a dataset, first occurrence wins.
pub fn documents_from_examples(examples: &[Example]) -> Vec<EvidenceDoc> {
    let mut seen = std::collections::BTreeSet::new();
    examples.iter().filter(|e| seen.insert(e.golden_evidence.id.clone())).map(|e| e.golden_evidence.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::example_with_evidence;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> EvidenceDoc {
        EvidenceDoc::new(id, text).unwrap()
    }

    #[test]
    fn document_corpus_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"text\":\"One. Two.\"}\n\n{\"id\":\"b\",\"text\":\"Three.\"}\n").unwrap();
        let docs = load_documents(&path).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        std::fs::write(&path, "{\"id\":\"a\"}\n").unwrap();
        assert!(matches!(load_documents(&path), Err(RetrievalError::Format { .. })));
    }

    #[test]
    fn golden_documents_are_deduplicated() {
        let a = example_with_evidence("1", "q?", "g", "Same text.");
        let b = example_with_evidence("2", "q?", "g", "Same text.");
        let c = example_with_evidence("3", "q?", "h", "Other text.");
        let docs = documents_from_examples(&[a, b, c]);
        assert_eq!(docs.len(), 2);
    }

    #[test]
    fn evidence_doc_requires_text() {
        assert!(matches!(EvidenceDoc::new("x", "  "), Err(RetrievalError::EmptyDocument(_))));
        let d = doc("x", "One. Two.");
        assert_eq!(d.sentences, vec!["One.", "Two."]);
    }

    #[test]
    fn topk_k_larger_than_corpus_returns_everything() {
        let idx = build_index(vec![doc("a", "red fox."), doc("b", "blue whale."), doc("c", "green frog.")], 1.2, 0.75)
            .unwrap();
        let top = retrieve_topk(&idx, "fox", 10).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].0, "a");
        // zero-score ties fall back to id order
        assert_eq!(top[1].0, "b");
        assert_eq!(top[2].0, "c");
        assert!(matches!(retrieve_topk(&idx, "fox", 0), Err(RetrievalError::ZeroK)));
    }

    #[test]
    fn topk_single_match() {
        let idx = build_index(vec![doc("a", "red fox."), doc("b", "blue whale."), doc("c", "green frog.")], 1.2, 0.75)
            .unwrap();
        assert_eq!(retrieve_topk(&idx, "whale", 1).unwrap()[0].0, "b");
    }

    #[test]
    fn non_evidence_two_doc_corpus() {
        let ex = example_with_evidence("e1", "where is the red fox?", "g", "The red fox lives here.");
        let idx = build_index(vec![ex.golden_evidence.clone(), doc("other", "Whales swim.")], 1.2, 0.75).unwrap();
        for mode in [NonEvidenceMode::Random, NonEvidenceMode::NextBest] {
            assert_eq!(select_non_evidence(&ex, &idx, mode, 3).unwrap().id, "other");
        }
    }

    #[test]
    fn non_evidence_singleton_corpus_fails() {
        let ex = example_with_evidence("e1", "where is the red fox?", "g", "The red fox lives here.");
        let idx = build_index(vec![ex.golden_evidence.clone()], 1.2, 0.75).unwrap();
        assert!(matches!(
            select_non_evidence(&ex, &idx, NonEvidenceMode::NextBest, 0),
            Err(RetrievalError::NoCandidate(_))
        ));
        assert!(matches!(
            select_non_evidence(&ex, &idx, NonEvidenceMode::Random, 0),
            Err(RetrievalError::NoCandidate(_))
        ));
    }

    #[test]
    fn next_best_skips_top_ranked_golden() {
        let ex = example_with_evidence("e1", "red fox den", "g", "The red fox has a den.");
        let idx = build_index(
            vec![
                ex.golden_evidence.clone(),
                doc("x", "A red car."),
                doc("y", "A fox den in spring."),
                doc("z", "Nothing here."),
            ],
            1.2,
            0.75,
        )
        .unwrap();
        let ranked = retrieve_topk(&idx, &ex.final_query.text, 4).unwrap();
        assert_eq!(ranked[0].0, "g");
        let picked = select_non_evidence(&ex, &idx, NonEvidenceMode::NextBest, 0).unwrap();
        assert_eq!(picked.id, ranked[1].0);
    }

    #[test]
    fn golden_injection_puts_golden_first() {
        let ex = example_with_evidence("e1", "zebra stripes", "g", "Nothing relevant at all.");
        let idx = build_index(
            vec![ex.golden_evidence.clone(), doc("x", "Zebra stripes are bold."), doc("y", "Stripes on a zebra.")],
            1.2,
            0.75,
        )
        .unwrap();
        let plain = retrieve_for_example(&ex, &idx, 2, false).unwrap();
        assert!(plain.iter().all(|d| d.id != "g"));
        let injected = retrieve_for_example(&ex, &idx, 2, true).unwrap();
        assert_eq!(injected.len(), 2);
        assert_eq!(injected[0].id, "g");
        assert_eq!(injected[1].id, plain[0].id);
        assert_eq!(recall_at_k(std::slice::from_ref(&ex), &idx, 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(std::slice::from_ref(&ex), &idx, 3).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn non_evidence_never_golden(
            words in proptest::collection::vec(proptest::collection::vec("[a-e]{1,3}", 1..6), 2..8),
            golden_pick in 0usize..8,
            seed in any::<u64>(),
            next_best in any::<bool>(),
        ) {
            let docs: Vec<EvidenceDoc> = words
                .iter()
                .enumerate()
                .map(|(i, w)| doc(&format!("d{i}"), &format!("{}.", w.join(" "))))
                .collect();
            let g = golden_pick % docs.len();
            let ex = example_with_evidence("ex", &docs[g].text.clone(), &docs[g].id.clone(), &docs[g].text.clone());
            let idx = build_index(docs, 1.2, 0.75).unwrap();
            let mode = if next_best { NonEvidenceMode::NextBest } else { NonEvidenceMode::Random };
            let picked = select_non_evidence(&ex, &idx, mode, seed).unwrap();
            prop_assert_ne!(&picked.id, &ex.golden_evidence.id);
        }
    }
}

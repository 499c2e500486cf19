//! Conversational QA examples: ingestion, the filter chain and seeded
//! sampling.

mod filters;
mod io;

pub use filters::{apply_filters, FilterConfig, FilterId, FilterReport, FilterStage, QUERY_FUNCTION_WORDS};
pub use io::{load_dataset, write_dataset, DatasetFormat, LoadedDataset, Record, RecordTurn, Reject};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::retrieval::EvidenceDoc;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} contains no well-formed examples ({rejected} rejected)")]
    EmptyDataset { path: PathBuf, rejected: usize },
    #[error("{path} is not a JSON array of records: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unknown filter '{0}'")]
    UnknownFilter(String),
    #[error("filter '{0}' is enabled more than once")]
    DuplicateFilter(String),
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("cannot sample {requested} examples from a set of {available}")]
    SampleSize { requested: usize, available: usize },
    #[error("invalid turn: {0}")]
    InvalidTurn(String),
    #[error("invalid example '{id}': {reason}")]
    InvalidExample { id: String, reason: String },
}

/// One dialog turn in the native dialog tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    /// -1 for the root turn.
    pub parent_index: i64,
    pub speaker_id: u32,
    pub text: String,
}

impl Turn {
    pub fn new(index: u32, parent_index: i64, speaker_id: u32, text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(CorpusError::InvalidTurn(format!("turn {index} has empty text")));
        }
        if parent_index >= i64::from(index) || parent_index < -1 {
            return Err(CorpusError::InvalidTurn(format!("turn {index} has parent {parent_index}")));
        }
        if (parent_index == -1) != (index == 0) {
            return Err(CorpusError::InvalidTurn(format!(
                "only turn 0 may be the root (turn {index}, parent {parent_index})"
            )));
        }
        Ok(Self { index, parent_index, speaker_id, text })
    }

    /// Linear chain: `texts[i]` becomes turn `i` with parent `i - 1`.
    pub fn chain<'a>(turns: impl IntoIterator<Item = (u32, &'a str)>) -> Result<Vec<Turn>, CorpusError> {
        turns
            .into_iter()
            .enumerate()
            .map(|(i, (speaker, text))| Turn::new(i as u32, i as i64 - 1, speaker, text))
            .collect()
    }
}

/// One dialog with its final query and golden answer/evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    /// Question/answer turns preceding the final query.
    pub history: Vec<Turn>,
    pub final_query: Turn,
    pub golden_answer: String,
    pub golden_evidence: EvidenceDoc,
    pub source_url: String,
}

impl Example {
    /// History followed by the final query.
    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.history.iter().chain(std::iter::once(&self.final_query))
    }

    /// Speaker expected to produce the next reply: whoever answered in the
    /// history, otherwise the "other" speaker of a two-party dialog.
    pub fn responder_speaker(&self) -> u32 {
        let asker = self.final_query.speaker_id;
        self.history.iter().map(|t| t.speaker_id).find(|s| *s != asker).unwrap_or(if asker == 0 { 1 } else { 0 })
    }
}

/// Default id of an example's golden evidence when the record names none.
pub fn default_evidence_id(example_id: &str) -> String {
    format!("ev:{example_id}")
}

/// Seeded subsample of `n` examples, in input order.
pub fn sample_examples(examples: &[Example], n: usize, seed: u64) -> Result<Vec<Example>, CorpusError> {
    if n > examples.len() {
        return Err(CorpusError::SampleSize { requested: n, available: examples.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, examples.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| examples[i].clone()).collect())
}


#[cfg(test)]
mod tests {
    use super::test_support::dialog_example;
    use super::*;

    #[test]
    fn turn_invariants() {
        assert!(Turn::new(0, -1, 0, "hi").is_ok());
        assert!(Turn::new(0, -1, 0, "   ").is_err());
        assert!(Turn::new(2, 2, 0, "x").is_err());
        assert!(Turn::new(2, -1, 0, "x").is_err());
        assert!(Turn::new(0, 0, 0, "x").is_err());
        assert_eq!(Turn::new(3, 1, 2, "  padded ").unwrap().text, "padded");
    }

    #[test]
    fn responder_speaker() {
        let ex = dialog_example("a", &["q", "a"], "q2?", "x y", "E.");
        assert_eq!(ex.responder_speaker(), 1);
        let ex = dialog_example("b", &[], "q?", "x y", "E.");
        assert_eq!(ex.responder_speaker(), 1);
    }

    fn set(n: usize) -> Vec<Example> {
        (0..n).map(|i| dialog_example(&format!("ex{i:03}"), &["q", "a"], "q?", "x y", "E.")).collect()
    }

    #[test]
    fn sampling_edges() {
        let xs = set(12);
        assert_eq!(sample_examples(&xs, 12, 1).unwrap(), xs);
        assert!(sample_examples(&xs, 0, 1).unwrap().is_empty());
        assert!(matches!(sample_examples(&xs, 13, 1), Err(CorpusError::SampleSize { .. })));
    }

    #[test]
    fn sampling_is_seeded_and_order_preserving() {
        let xs = set(324);
        let a = sample_examples(&xs, 100, 7).unwrap();
        let b = sample_examples(&xs, 100, 7).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert!(a.windows(2).all(|w| w[0].id < w[1].id));
        assert_ne!(a, sample_examples(&xs, 100, 8).unwrap());
    }
}

//! JSONL dataset ingestion and serialization.
//!
//! One record per line:
//! `{"id": str, "turns": [{"speaker": int, "text": str}], "answer": str,
//! "answer_url": str, "evidence": str}`; an optional `"evidence_id"` names the
//! golden passage. The last turn is the final query.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{default_evidence_id, CorpusError, Example, Turn};
use crate::retrieval::EvidenceDoc;
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// One record per line.
    #[default]
    Jsonl,
    /// A single JSON array of records.
    JsonArray,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "json" => Ok(DatasetFormat::JsonArray),
            other => Err(format!("unknown dataset format '{other}' (expected jsonl or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTurn {
    pub speaker: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub turns: Vec<RecordTurn>,
    pub answer: String,
    pub answer_url: String,
    pub evidence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_id: Option<String>,
}

/// A record that could not be turned into an [`Example`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line (JSONL) or array position (JSON).
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub examples: Vec<Example>,
    pub rejects: Vec<Reject>,
}

impl Record {
    pub fn into_example(self) -> Result<Example, CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidExample { id: self.id.clone(), reason };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.turns.is_empty() {
            return Err(invalid("no turns".into()));
        }
        let answer = self.answer.trim();
        if answer.is_empty() {
            return Err(invalid("empty golden answer".into()));
        }
        let mut turns = Vec::with_capacity(self.turns.len());
        for (i, t) in self.turns.iter().enumerate() {
            let text = normalize_whitespace(&t.text);
            if text.contains("[eot]") {
                return Err(invalid(format!("turn {i} contains the [eot] marker")));
            }
            turns.push(Turn::new(i as u32, i as i64 - 1, t.speaker, text).map_err(|e| invalid(e.to_string()))?);
        }
        let final_query = turns.pop().expect("turns checked non-empty");
        let evidence_id = self.evidence_id.clone().unwrap_or_else(|| default_evidence_id(&self.id));
        let golden_evidence =
            EvidenceDoc::new(evidence_id, self.evidence.clone()).map_err(|e| invalid(e.to_string()))?;
        Ok(Example {
            id: self.id.clone(),
            history: turns,
            final_query,
            golden_answer: answer.to_string(),
            golden_evidence,
            source_url: self.answer_url.clone(),
        })
    }

    pub fn from_example(example: &Example) -> Self {
        let evidence_id = (example.golden_evidence.id != default_evidence_id(&example.id))
            .then(|| example.golden_evidence.id.clone());
        Record {
            id: example.id.clone(),
            turns: example.turns().map(|t| RecordTurn { speaker: t.speaker_id, text: t.text.clone() }).collect(),
            answer: example.golden_answer.clone(),
            answer_url: example.source_url.clone(),
            evidence: example.golden_evidence.text.clone(),
            evidence_id,
        }
    }
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// Load every well-formed example; malformed records land in `rejects`.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedDataset, CorpusError> {
    let raw = fs::read_to_string(path).map_err(read_err(path))?;
    let mut examples = Vec::new();
    let mut rejects = Vec::new();

    let mut accept = |line: usize, value: Result<serde_json::Value, String>| {
        let id = value.as_ref().ok().and_then(|v| v.get("id")).and_then(|v| v.as_str()).map(str::to_string);
        let parsed = value
            .and_then(|v| serde_json::from_value::<Record>(v).map_err(|e| e.to_string()))
            .and_then(|r| r.into_example().map_err(|e| e.to_string()));
        match parsed {
            Ok(ex) => examples.push(ex),
            Err(reason) => rejects.push(Reject { line, id, reason }),
        }
    };

    match format {
        DatasetFormat::Jsonl => {
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                accept(i + 1, serde_json::from_str(line).map_err(|e| e.to_string()));
            }
        }
        DatasetFormat::JsonArray => {
            let values: Vec<serde_json::Value> = serde_json::from_str(&raw)
                .map_err(|e| CorpusError::Format { path: path.to_path_buf(), message: e.to_string() })?;
            for (i, v) in values.into_iter().enumerate() {
                accept(i + 1, Ok(v));
            }
        }
    }

    if examples.is_empty() {
        return Err(CorpusError::EmptyDataset { path: path.to_path_buf(), rejected: rejects.len() });
    }
    for r in &rejects {
        tracing::warn!(line = r.line, id = ?r.id, reason = %r.reason, "rejected dataset record");
    }
    Ok(LoadedDataset { examples, rejects })
}

/// Write examples as JSONL in the ingestion schema.
pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut out, &Record::from_example(ex)).expect("record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(read_err(path))?;
    file.write_all(&out).map_err(read_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD_1: &str = r#"{"id":"c1","turns":[{"speaker":0,"text":"Who built it?"},{"speaker":1,"text":"A   team\nof engineers."},{"speaker":0,"text":"When was it finished?"}],"answer":"It was finished in 1889.","answer_url":"https://example.org/a","evidence":"The tower was built by a team. It was finished in 1889."}"#;
    const GOOD_2: &str = r#"{"id":"c2","turns":[{"speaker":0,"text":"What is it?"}],"answer":"A tower.","answer_url":"","evidence":"A tower.","evidence_id":"doc-7"}"#;
    const NO_ANSWER: &str = r#"{"id":"c3","turns":[{"speaker":0,"text":"What?"}],"answer_url":"","evidence":"E."}"#;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_valid_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.jsonl", &format!("{GOOD_1}\n\n{GOOD_2}\n"));
        let ds = load_dataset(&p, DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.examples.len(), 2);
        assert!(ds.rejects.is_empty());
        let ex = &ds.examples[0];
        assert_eq!(ex.history.len(), 2);
        assert_eq!(ex.history[1].text, "A team of engineers.");
        assert_eq!(ex.final_query.index, 2);
        assert_eq!(ex.final_query.parent_index, 1);
        assert_eq!(ex.golden_evidence.id, "ev:c1");
        assert_eq!(ds.examples[1].golden_evidence.id, "doc-7");
    }

    #[test]
    fn malformed_records_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.jsonl", &format!("{GOOD_1}\n{NO_ANSWER}\nnot json\n"));
        let ds = load_dataset(&p, DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.examples.len(), 1);
        assert_eq!(ds.rejects.len(), 2);
        assert_eq!(ds.rejects[0].line, 2);
        assert_eq!(ds.rejects[0].id.as_deref(), Some("c3"));
    }

    #[test]
    fn empty_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.jsonl", &format!("{NO_ANSWER}\n"));
        assert!(matches!(load_dataset(&p, DatasetFormat::Jsonl), Err(CorpusError::EmptyDataset { rejected: 1, .. })));
        assert!(matches!(
            load_dataset(&dir.path().join("missing.jsonl"), DatasetFormat::Jsonl),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn json_array_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.json", &format!("[{GOOD_1},{GOOD_2}]"));
        assert_eq!(load_dataset(&p, DatasetFormat::JsonArray).unwrap().examples.len(), 2);
    }

    #[test]
    fn load_write_load_is_a_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.jsonl", &format!("{GOOD_1}\n{GOOD_2}\n"));
        let first = load_dataset(&p, DatasetFormat::Jsonl).unwrap().examples;
        let out = dir.path().join("out.jsonl");
        write_dataset(&out, &first).unwrap();
        let second = load_dataset(&out, DatasetFormat::Jsonl).unwrap().examples;
        assert_eq!(first, second);
        let again = dir.path().join("again.jsonl");
        write_dataset(&again, &second).unwrap();
        assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    }
}

//! Run archives: JSONL with a header line, one line per response or
//! incomplete cell, and an `end` trailer that makes truncation detectable.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CellKey, GridError};
use crate::metrics::{experiment_point, ExperimentPoint, ScoredResponse};
use crate::modelgw::ModelSize;

pub const ARCHIVE_FORMAT: &str = "attrib-run";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Backend name → url (or mock identifier).
    pub backends: BTreeMap<String, String>,
    pub seed: u64,
    pub created_at: u64,
    /// Input name → content hash.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub kind: String,
    /// Everything needed to re-execute the run.
    pub config: Value,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedResponse {
    pub cell: CellKey,
    pub response: ScoredResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteCell {
    pub cell: CellKey,
    pub example_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub header: RunHeader,
    pub responses: Vec<ArchivedResponse>,
    pub incomplete: Vec<IncompleteCell>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header { format: String, version: u32, header: RunHeader },
    Response(ArchivedResponse),
    Incomplete(IncompleteCell),
    End { responses: usize, incomplete: usize },
}

impl RunArchive {
    pub fn new(header: RunHeader) -> Self {
        Self { header, responses: Vec::new(), incomplete: Vec::new() }
    }

    /// Cells in first-appearance order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out: Vec<CellKey> = Vec::new();
        for r in &self.responses {
            if !out.contains(&r.cell) {
                out.push(r.cell.clone());
            }
        }
        out
    }

    pub fn is_incomplete(&self, cell: &CellKey) -> bool {
        self.incomplete.iter().any(|i| &i.cell == cell)
    }

    /// One point per complete cell.
    pub fn points(&self) -> Result<Vec<(CellKey, ExperimentPoint)>, GridError> {
        let mut out = Vec::new();
        for cell in self.cells() {
            if self.is_incomplete(&cell) {
                continue;
            }
            let responses: Vec<ScoredResponse> =
                self.responses.iter().filter(|r| r.cell == cell).map(|r| r.response.clone()).collect();
            out.push((cell.clone(), experiment_point(&responses, &cell.label())?));
        }
        Ok(out)
    }

    /// (model, temperature) groups in first-appearance order.
    pub fn groups(&self) -> Vec<(ModelSize, f64)> {
        let mut out: Vec<(ModelSize, f64)> = Vec::new();
        for c in self.cells() {
            if !out.iter().any(|(m, t)| *m == c.model && *t == c.temperature) {
                out.push((c.model, c.temperature));
            }
        }
        out
    }

    /// Responses of one (model, temperature) group keyed by example id,
    /// optionally restricted to some prompt labels. Incomplete cells are
    /// left out.
    pub fn candidates(
        &self,
        model: ModelSize,
        temperature: f64,
        labels: Option<&[String]>,
    ) -> BTreeMap<String, Vec<ScoredResponse>> {
        let mut out: BTreeMap<String, Vec<ScoredResponse>> = BTreeMap::new();
        for r in &self.responses {
            let c = &r.cell;
            if c.model != model || c.temperature != temperature || self.is_incomplete(c) {
                continue;
            }
            if labels.is_some_and(|ls| !ls.contains(&c.prompt_label)) {
                continue;
            }
            out.entry(r.response.example_id.clone()).or_default().push(r.response.clone());
        }
        out
    }
}

fn io_err(path: &Path, source: std::io::Error) -> GridError {
    GridError::Io { path: path.to_path_buf(), source }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("archive lines serialize");
    s.push('\n');
    s
}

/// Single writer that appends lines as results arrive.
pub struct ArchiveWriter {
    path: PathBuf,
    out: BufWriter<File>,
    responses: usize,
    incomplete: usize,
}

impl ArchiveWriter {
    pub fn create(path: impl AsRef<Path>, header: &RunHeader) -> Result<Self, GridError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = Self { path, out: BufWriter::new(file), responses: 0, incomplete: 0 };
        w.write(&Line::Header {
            format: ARCHIVE_FORMAT.to_string(),
            version: ARCHIVE_VERSION,
            header: header.clone(),
        })?;
        Ok(w)
    }

    fn write(&mut self, line: &Line) -> Result<(), GridError> {
        self.out.write_all(json_line(line).as_bytes()).map_err(|e| io_err(&self.path, e))
    }

    pub fn append_response(&mut self, r: &ArchivedResponse) -> Result<(), GridError> {
        self.responses += 1;
        self.write(&Line::Response(r.clone()))
    }

    pub fn append_incomplete(&mut self, i: &IncompleteCell) -> Result<(), GridError> {
        self.incomplete += 1;
        self.write(&Line::Incomplete(i.clone()))
    }

    pub fn finish(mut self) -> Result<(), GridError> {
        let end = Line::End { responses: self.responses, incomplete: self.incomplete };
        self.write(&end)?;
        self.out.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn save_run(archive: &RunArchive, path: impl AsRef<Path>) -> Result<(), GridError> {
    let mut w = ArchiveWriter::create(path, &archive.header)?;
    for r in &archive.responses {
        w.append_response(r)?;
    }
    for i in &archive.incomplete {
        w.append_incomplete(i)?;
    }
    w.finish()
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunArchive, GridError> {
    let path = path.as_ref();
    let corrupt = |line: usize, message: String| GridError::Corrupt { path: path.to_path_buf(), line, message };
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let first = match lines.next() {
        Some((_, l)) => l.map_err(|e| io_err(path, e))?,
        None => return Err(corrupt(1, "empty file".into())),
    };
    let raw: Value = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
    if raw.get("type").and_then(Value::as_str) != Some("header")
        || raw.get("format").and_then(Value::as_str) != Some(ARCHIVE_FORMAT)
    {
        return Err(corrupt(1, "missing run archive header".into()));
    }
    let version =
        raw.get("version").and_then(Value::as_u64).ok_or_else(|| corrupt(1, "header has no version".into()))?;
    if version != u64::from(ARCHIVE_VERSION) {
        return Err(GridError::Version { found: version, supported: ARCHIVE_VERSION });
    }
    let Line::Header { header, .. } = serde_json::from_value(raw).map_err(|e| corrupt(1, e.to_string()))? else {
        return Err(corrupt(1, "missing run archive header".into()));
    };

    let mut archive = RunArchive::new(header);
    let mut ended = false;
    for (n, line) in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if ended {
            if line.trim().is_empty() {
                continue;
            }
            return Err(corrupt(n + 1, "content after the end trailer".into()));
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| corrupt(n + 1, e.to_string()))? {
            Line::Response(r) => archive.responses.push(r),
            Line::Incomplete(i) => archive.incomplete.push(i),
            Line::End { responses, incomplete } => {
                if responses != archive.responses.len() || incomplete != archive.incomplete.len() {
                    return Err(corrupt(n + 1, "trailer counts do not match the archive body".into()));
                }
                ended = true;
            }
            Line::Header { .. } => return Err(corrupt(n + 1, "second header".into())),
        }
    }
    if !ended {
        return Err(corrupt(0, "archive is truncated (no end trailer)".into()));
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_archive(cells: usize) -> RunArchive {
        let header = RunHeader {
            run_id: "r1".into(),
            kind: "grid".into(),
            config: serde_json::json!({"seed": 1}),
            provenance: Provenance {
                backends: BTreeMap::from([("generator".into(), "mock".into())]),
                seed: 1,
                created_at: 0,
                inputs: BTreeMap::new(),
            },
        };
        let mut a = RunArchive::new(header);
        for c in 0..cells {
            let cell = CellKey {
                model: ModelSize::ALL[c % 3],
                temperature: 0.7 * (c % 2) as f64,
                prompt_label: format!("p{c}"),
            };
            for e in 0..2 {
                a.responses.push(ArchivedResponse {
                    cell: cell.clone(),
                    response: ScoredResponse {
                        example_id: format!("e{e}"),
                        prompt_label: cell.prompt_label.clone(),
                        response_text: format!("reply {c} {e} \"quoted\" ünïcode"),
                        sensibleness: 0.1 * e as f64 + 0.3,
                        attribution_score: 1.0 / (c as f64 + 3.0),
                        attributable: false,
                    },
                });
            }
        }
        a
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut a = sample_archive(42);
        a.incomplete.push(IncompleteCell {
            cell: a.responses[0].cell.clone(),
            example_id: "e9".into(),
            error: "boom".into(),
        });
        save_run(&a, &path).unwrap();
        let b = load_run(&path).unwrap();
        assert_eq!(a, b);
        let again = dir.path().join("again.jsonl");
        save_run(&b, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn truncation_and_version_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        save_run(&sample_archive(3), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let cut = dir.path().join("cut.jsonl");
        std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_run(&cut), Err(GridError::Corrupt { .. })));

        let no_trailer: Vec<&str> = text.lines().collect();
        std::fs::write(&cut, no_trailer[..no_trailer.len() - 1].join("\n")).unwrap();
        assert!(matches!(load_run(&cut), Err(GridError::Corrupt { .. })));

        let newer = dir.path().join("newer.jsonl");
        std::fs::write(&newer, text.replacen("\"version\":1", "\"version\":2", 1)).unwrap();
        assert!(matches!(load_run(&newer), Err(GridError::Version { found: 2, .. })));

        std::fs::write(&newer, "").unwrap();
        assert!(matches!(load_run(&newer), Err(GridError::Corrupt { .. })));
    }

    #[test]
    fn points_and_candidates() {
        let mut a = sample_archive(4);
        let points = a.points().unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].1.n_examples, 2);
        let cands = a.candidates(ModelSize::S, 0.0, None);
        assert_eq!(cands.len(), 2);
        a.incomplete.push(IncompleteCell {
            cell: a.responses[0].cell.clone(),
            example_id: "e0".into(),
            error: "x".into(),
        });
        assert_eq!(a.points().unwrap().len(), 3);
    }
}

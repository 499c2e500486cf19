//! Session logs: live calls can be appended to a JSONL file, one
//! `{"req", "resp", "ts"}` record per call, and served back offline.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_probability, Entailment, GatewayError, GenerationConfig, Generator};
use crate::seed::{content_hash, timestamp_secs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub req: Value,
    pub resp: Value,
    pub ts: u64,
}

fn generate_request(prompt: &str, config: &GenerationConfig) -> Value {
    json!({
        "kind": "generate",
        "model": config.model_id.as_str(),
        "prompt": prompt,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "stop": config.stop_sequences,
        "seed": config.seed,
    })
}

fn nli_request(premise: &str, hypothesis: &str) -> Value {
    json!({ "kind": "nli", "premise": premise, "hypothesis": hypothesis })
}

/// Object keys serialize in sorted order, so equal requests hash equally.
fn request_key(req: &Value) -> String {
    content_hash(req.to_string().as_bytes())
}

fn log_error(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Replay(format!("{}: {e}", path.display()))
}

/// Append-only JSONL writer shared by recorders.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| log_error(&path, e))?;
        Ok(Self { path, file: Mutex::new(file) })
    }

    pub fn append(&self, req: Value, resp: Value) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(&SessionRecord { req, resp, ts: timestamp_secs() })
            .map_err(|e| log_error(&self.path, e))?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes()).map_err(|e| log_error(&self.path, e))
    }
}

/// Wraps a backend and logs every successful call.
pub struct Recorder<T> {
    inner: T,
    log: Arc<SessionLog>,
}

impl<T> Recorder<T> {
    pub fn new(inner: T, log: Arc<SessionLog>) -> Self {
        Self { inner, log }
    }
}

impl<T: Generator> Generator for Recorder<T> {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError> {
        let text = self.inner.generate(prompt, config)?;
        self.log.append(generate_request(prompt, config), json!({ "text": text }))?;
        Ok(text)
    }
}

impl<T: Entailment> Entailment for Recorder<T> {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        let p = self.inner.entail(premise, hypothesis)?;
        self.log.append(nli_request(premise, hypothesis), json!({ "entailment": p }))?;
        Ok(p)
    }
}

/// Serves recorded responses; a request missing from the log is an error.
#[derive(Debug, Default, Clone)]
pub struct Replayer {
    responses: HashMap<String, Value>,
}

impl Replayer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| log_error(path, e))?;
        let mut responses = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| log_error(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SessionRecord =
                serde_json::from_str(&line).map_err(|e| log_error(path, format!("line {}: {e}", n + 1)))?;
            responses.entry(request_key(&record.req)).or_insert(record.resp);
        }
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    fn lookup(&self, req: &Value, field: &str) -> Result<&Value, GatewayError> {
        let resp = self
            .responses
            .get(&request_key(req))
            .ok_or_else(|| GatewayError::Replay(format!("no recorded {} call matches this request", req["kind"])))?;
        resp.get(field).ok_or_else(|| GatewayError::Replay(format!("recorded response lacks '{field}'")))
    }
}

impl Generator for Replayer {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError> {
        self.lookup(&generate_request(prompt, config), "text")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Replay("recorded text is not a string".into()))
    }
}

impl Entailment for Replayer {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        let p = self
            .lookup(&nli_request(premise, hypothesis), "entailment")?
            .as_f64()
            .ok_or_else(|| GatewayError::Replay("recorded entailment is not a number".into()))?;
        check_probability(p)
    }
}

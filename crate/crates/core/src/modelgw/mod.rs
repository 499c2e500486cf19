//! Gateway to the three model capabilities: generation, NLI entailment and
//! sensibleness scoring. Live backends speak HTTP; mocks are deterministic.

mod http;
mod mock;
mod replay;
mod sensibleness;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpGenerator, HttpNli, InFlightLimiter, ENV_GEN_URL, ENV_NLI_URL, ENV_SENS_URL};
pub use mock::{EchoGenerator, MockGenerator, MockSensibleness, OverlapNli};
pub use replay::{Recorder, Replayer, SessionLog, SessionRecord};
pub use sensibleness::{
    dialog_context, parse_sensibleness, sensibleness_prompt, sensibleness_score, SensiblenessScorer,
    SENSIBLENESS_PROMPT,
};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("backend returned HTTP {status}: {body}")]
    Backend { status: u16, body: String },
    #[error("cannot parse a score in [0,1] from completion {raw:?}")]
    ScoreParse { raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    Response(String),
    #[error("replay: {0}")]
    Replay(String),
}

impl GatewayError {
    /// Timeouts, transport failures, 429 and 5xx are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) | GatewayError::Timeout(_) => true,
            GatewayError::Backend { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelSize {
    S,
    M,
    L,
}

impl ModelSize {
    pub const ALL: [ModelSize; 3] = [ModelSize::S, ModelSize::M, ModelSize::L];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelSize::S => "S",
            ModelSize::M => "M",
            ModelSize::L => "L",
        }
    }
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelSize {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "S" | "s" => Ok(ModelSize::S),
            "M" | "m" => Ok(ModelSize::M),
            "L" | "l" => Ok(ModelSize::L),
            other => Err(format!("unknown model id '{other}' (expected S, M or L)")),
        }
    }
}

fn default_max_tokens() -> u32 {
    256
}

fn default_stop() -> Vec<String> {
    vec![crate::promptkit::EOT.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: ModelSize,
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_stop")]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenerationConfig {
    pub fn new(model_id: ModelSize, temperature: f64) -> Self {
        Self { model_id, temperature, max_tokens: default_max_tokens(), stop_sequences: default_stop(), seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0,1]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.stop_sequences.is_empty() || self.stop_sequences.iter().any(|s| s.is_empty()) {
            return Err(GatewayError::InvalidRequest("stop sequences must be non-empty".into()));
        }
        Ok(())
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub url: String,
    #[serde(rename = "timeout_ms", with = "duration_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry delay; doubles on every further attempt.
    #[serde(rename = "backoff_ms", with = "duration_ms", default = "default_backoff")]
    pub backoff: Duration,
}

fn default_backoff() -> Duration {
    Duration::from_millis(200)
}

impl BackendEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            max_in_flight: 8,
            backoff: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.url.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("endpoint url is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidRequest("max_in_flight must be positive".into()));
        }
        Ok(())
    }
}

pub trait Generator: Send + Sync {
    /// Raw continuation of `prompt`. Callers apply `parse_completion`.
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError>;
}

pub trait Entailment: Send + Sync {
    /// Probability in [0,1] that `premise` entails `hypothesis`.
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError>;

    fn entail_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, GatewayError> {
        pairs.iter().map(|(p, h)| self.entail(p, h)).collect()
    }
}

impl<T: Generator + ?Sized> Generator for std::sync::Arc<T> {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError> {
        (**self).generate(prompt, config)
    }
}

impl<T: Entailment + ?Sized> Entailment for std::sync::Arc<T> {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        (**self).entail(premise, hypothesis)
    }

    fn entail_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, GatewayError> {
        (**self).entail_batch(pairs)
    }
}

pub(crate) fn check_prompt(prompt: &str) -> Result<(), GatewayError> {
    if prompt.is_empty() {
        return Err(GatewayError::InvalidRequest("prompt is empty".into()));
    }
    Ok(())
}

pub(crate) fn check_pair(premise: &str, hypothesis: &str) -> Result<(), GatewayError> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("premise and hypothesis must be non-empty".into()));
    }
    Ok(())
}

pub(crate) fn check_probability(p: f64) -> Result<f64, GatewayError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(GatewayError::Response(format!("entailment {p} outside [0,1]")))
    }
}

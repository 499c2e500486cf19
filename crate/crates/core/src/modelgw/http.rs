//! JSON-over-HTTP backends with retries and a per-endpoint in-flight cap.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::Serialize;
use serde_json::Value;

use super::{
    check_pair, check_probability, check_prompt, BackendEndpoint, Entailment, GatewayError, GenerationConfig,
    Generator, ModelSize,
};

pub const ENV_GEN_URL: &str = "ATTRIB_GEN_URL";
pub const ENV_NLI_URL: &str = "ATTRIB_NLI_URL";
pub const ENV_SENS_URL: &str = "ATTRIB_SENS_URL";

const BODY_EXCERPT: usize = 512;

/// Counting semaphore that also remembers the highest count it has seen.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct Permit<'a>(&'a InFlightLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        Self { max: max.max(1), current: Mutex::new(0), freed: Condvar::new(), peak: AtomicUsize::new(0) }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        Permit(self)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
struct Client {
    http: reqwest::blocking::Client,
    endpoint: BackendEndpoint,
    limiter: InFlightLimiter,
}

impl Client {
    fn new(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let limiter = InFlightLimiter::new(endpoint.max_in_flight);
        Ok(Self { http, endpoint, limiter })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.endpoint.url.trim_end_matches('/'))
    }

    fn send_once(&self, url: &str, body: &[u8]) -> Result<Value, GatewayError> {
        let _permit = self.limiter.acquire();
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                GatewayError::Timeout(e.to_string())
            } else {
                GatewayError::Transport(e.to_string())
            }
        };
        let resp = self
            .http
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .map_err(classify)?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(classify)?;
        if !status.is_success() {
            let body: String = String::from_utf8_lossy(&bytes).chars().take(BODY_EXCERPT).collect();
            return Err(GatewayError::Backend { status: status.as_u16(), body });
        }
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::Response(e.to_string()))
    }

    fn post<T: Serialize>(&self, path: &str, request: &T) -> Result<Value, GatewayError> {
        let body = serde_json::to_vec(request).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let url = self.url(path);
        let mut attempt = 0u32;
        loop {
            match self.send_once(&url, &body) {
                Err(e) if e.is_retryable() && attempt < self.endpoint.max_retries => {
                    let delay = self.endpoint.backoff.saturating_mul(2u32.saturating_pow(attempt));
                    tracing::warn!(%url, attempt, error = %e, "retrying after {:?}", delay);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct NliRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value, GatewayError> {
    v.get(name).ok_or_else(|| GatewayError::Response(format!("response has no '{name}' field")))
}

fn env_url(var: &str) -> Result<String, GatewayError> {
    std::env::var(var)
        .ok()
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| GatewayError::InvalidRequest(format!("{var} is not set")))
}

/// `POST /v1/generate`, one endpoint per model size.
#[derive(Debug)]
pub struct HttpGenerator {
    clients: BTreeMap<ModelSize, Arc<Client>>,
}

impl HttpGenerator {
    pub fn new(endpoints: BTreeMap<ModelSize, BackendEndpoint>) -> Result<Self, GatewayError> {
        let clients = endpoints
            .into_iter()
            .map(|(m, e)| Ok((m, Arc::new(Client::new(e)?))))
            .collect::<Result<_, GatewayError>>()?;
        Ok(Self { clients })
    }

    /// Same endpoint (and in-flight budget) for every model size.
    pub fn single(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        let client = Arc::new(Client::new(endpoint)?);
        Ok(Self { clients: ModelSize::ALL.iter().map(|m| (*m, client.clone())).collect() })
    }

    /// Reads `var`; a `{model}` placeholder expands to S, M and L.
    pub fn from_env(var: &str, template: &BackendEndpoint) -> Result<Self, GatewayError> {
        let url = env_url(var)?;
        if !url.contains("{model}") {
            return Self::single(BackendEndpoint { url, ..template.clone() });
        }
        Self::new(
            ModelSize::ALL
                .iter()
                .map(|m| (*m, BackendEndpoint { url: url.replace("{model}", m.as_str()), ..template.clone() }))
                .collect(),
        )
    }

    pub fn peak_in_flight(&self, model: ModelSize) -> usize {
        self.clients.get(&model).map_or(0, |c| c.limiter.peak())
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError> {
        check_prompt(prompt)?;
        config.validate()?;
        let client = self
            .clients
            .get(&config.model_id)
            .ok_or_else(|| GatewayError::InvalidRequest(format!("no endpoint for model {}", config.model_id)))?;
        let request = GenerateRequest {
            prompt,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            stop: &config.stop_sequences,
            seed: config.seed,
        };
        let resp = client.post("/v1/generate", &request)?;
        field(&resp, "text")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Response("'text' is not a string".into()))
    }
}

/// `POST /v1/nli`.
#[derive(Debug)]
pub struct HttpNli {
    client: Client,
}

impl HttpNli {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        Ok(Self { client: Client::new(endpoint)? })
    }

    pub fn from_env(template: &BackendEndpoint) -> Result<Self, GatewayError> {
        Self::new(BackendEndpoint { url: env_url(ENV_NLI_URL)?, ..template.clone() })
    }

    pub fn peak_in_flight(&self) -> usize {
        self.client.limiter.peak()
    }
}

impl Entailment for HttpNli {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        check_pair(premise, hypothesis)?;
        let resp = self.client.post("/v1/nli", &NliRequest { premise, hypothesis })?;
        let p = field(&resp, "entailment")?
            .as_f64()
            .ok_or_else(|| GatewayError::Response("'entailment' is not a number".into()))?;
        check_probability(p)
    }
}

//! The shared run config: one JSON document with a section per subcommand.
//! Command-line flags override section values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub backends: BackendSettings,
    pub corpus: Map<String, Value>,
    pub retrieve: Map<String, Value>,
    pub grid: Map<String, Value>,
    pub rerank: Map<String, Value>,
    pub recipe: Map<String, Value>,
    pub metrics: Map<String, Value>,
    pub plot: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    /// Deterministic in-process backends.
    Mock,
    /// HTTP backends named by the ATTRIB_*_URL environment variables.
    #[default]
    Http,
    /// Answer every call from a recorded session log.
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub mode: BackendMode,
    /// Session log to append every backend call to.
    pub record: Option<PathBuf>,
    /// Session log read by replay mode.
    pub replay: Option<PathBuf>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            mode: BackendMode::Http,
            record: None,
            replay: None,
            timeout_ms: 60_000,
            max_retries: 3,
            max_in_flight: 8,
            backoff_ms: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// A config section with typed, flag-overridable lookups.
pub struct Section<'a> {
    name: &'static str,
    map: &'a Map<String, Value>,
}

impl<'a> Section<'a> {
    pub fn new(name: &'static str, map: &'a Map<String, Value>) -> Self {
        Self { name, map }
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .with_context(|| format!("config key {}.{key} has the wrong type", self.name)),
        }
    }

    /// Flag value if given, else the config value.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, flag_name: &str) -> Result<T> {
        match self.pick(flag, key)? {
            Some(v) => Ok(v),
            None => bail!("missing {flag_name} (or \"{key}\" in the \"{}\" config section)", self.name),
        }
    }

    /// The section minus the given keys, for deserializing the rest into a
    /// library config type.
    pub fn without(&self, keys: &[&str]) -> Map<String, Value> {
        self.map.iter().filter(|(k, _)| !keys.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// Parse a comma-separated list.
pub fn split_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("invalid {what} '{s}': {e}")))
        .collect()
}

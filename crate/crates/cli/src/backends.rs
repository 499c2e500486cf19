//! Builds the generation, entailment and sensibleness backends.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Result};
use attrib_core::gridlab::Scorers;
use attrib_core::modelgw::{
    BackendEndpoint, Entailment, Generator, HttpGenerator, HttpNli, MockGenerator, MockSensibleness, OverlapNli,
    Recorder, Replayer, SensiblenessScorer, SessionLog, ENV_GEN_URL, ENV_NLI_URL, ENV_SENS_URL,
};

use crate::config::{BackendMode, BackendSettings};

pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub nli: Arc<dyn Entailment>,
    pub sensibleness: SensiblenessScorer,
    /// Short description of each backend for run provenance.
    pub provenance: BTreeMap<String, String>,
}

impl Backends {
    pub fn scorers(&self) -> Scorers<'_> {
        Scorers { generator: self.generator.as_ref(), nli: self.nli.as_ref(), sensibleness: &self.sensibleness }
    }
}

fn env_or_fail(var: &str) -> Result<String> {
    match std::env::var(var) {
        Ok(v) if !v.trim().is_empty() => Ok(v),
        _ => bail!("{var} is not set; set it or choose --backend mock or --backend replay"),
    }
}

pub fn build(settings: &BackendSettings) -> Result<Backends> {
    let cfg_err = |e: attrib_core::modelgw::GatewayError| anyhow!("backend configuration: {e}");
    let (mut generator, mut nli, mut sens): (Arc<dyn Generator>, Arc<dyn Entailment>, Arc<dyn Generator>);
    let mut provenance = BTreeMap::new();
    match settings.mode {
        BackendMode::Mock => {
            generator = Arc::new(MockGenerator::new());
            nli = Arc::new(OverlapNli);
            sens = Arc::new(MockSensibleness);
            provenance.insert("generator".into(), "mock".into());
            provenance.insert("nli".into(), "mock-overlap".into());
            provenance.insert("sensibleness".into(), "mock".into());
        }
        BackendMode::Http => {
            let template = BackendEndpoint {
                url: String::new(),
                timeout: Duration::from_millis(settings.timeout_ms),
                max_retries: settings.max_retries,
                max_in_flight: settings.max_in_flight,
                backoff: Duration::from_millis(settings.backoff_ms),
            };
            let (gen_url, nli_url, sens_url) =
                (env_or_fail(ENV_GEN_URL)?, env_or_fail(ENV_NLI_URL)?, env_or_fail(ENV_SENS_URL)?);
            generator = Arc::new(HttpGenerator::from_env(ENV_GEN_URL, &template).map_err(cfg_err)?);
            nli = Arc::new(HttpNli::from_env(&template).map_err(cfg_err)?);
            sens = Arc::new(HttpGenerator::from_env(ENV_SENS_URL, &template).map_err(cfg_err)?);
            provenance.insert("generator".into(), gen_url);
            provenance.insert("nli".into(), nli_url);
            provenance.insert("sensibleness".into(), sens_url);
        }
        BackendMode::Replay => {
            let Some(path) = &settings.replay else { bail!("replay mode needs --replay <session log>") };
            let replayer = Arc::new(Replayer::load(path).map_err(cfg_err)?);
            generator = replayer.clone();
            nli = replayer.clone();
            sens = replayer;
            let tag = format!("replay:{}", path.display());
            for k in ["generator", "nli", "sensibleness"] {
                provenance.insert(k.into(), tag.clone());
            }
        }
    }
    if let Some(path) = &settings.record {
        let log = Arc::new(SessionLog::open(path).map_err(cfg_err)?);
        generator = Arc::new(Recorder::new(generator, log.clone()));
        nli = Arc::new(Recorder::new(nli, log.clone()));
        sens = Arc::new(Recorder::new(sens, log));
    }
    Ok(Backends { generator, nli, sensibleness: SensiblenessScorer::new(sens), provenance })
}

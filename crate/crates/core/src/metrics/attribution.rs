//! Auto-attribution: NLI entailment between evidence and a reply, localized by
//! max-pooling over sliding windows of evidence sentences.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Example;
use crate::modelgw::Entailment;
use crate::retrieval::EvidenceDoc;

/// How premise and hypothesis are built from evidence (E), the question that
/// precedes the reply (Q) and the reply (A).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NliFlavor {
    /// (E + Q) entails A
    V1,
    /// E entails (Q + A)
    V2,
    /// (E + Q) entails (Q + A)
    #[default]
    V3,
}

impl std::str::FromStr for NliFlavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v1" => Ok(NliFlavor::V1),
            "v2" => Ok(NliFlavor::V2),
            "v3" => Ok(NliFlavor::V3),
            other => Err(format!("unknown NLI flavor '{other}'")),
        }
    }
}

/// Which passage a reply's attribution is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttributionTarget {
    /// Always the example's golden evidence, whatever the prompt contained.
    #[default]
    Golden,
    /// The passages shown in the prompt (max over them); 0 when none.
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub flavor: NliFlavor,
    /// Sentences per evidence window.
    pub window_k: usize,
    pub threshold: f64,
    pub target: AttributionTarget,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self { flavor: NliFlavor::V3, window_k: 2, threshold: 0.5, target: AttributionTarget::Golden }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.window_k == 0 {
            return Err(MetricsError::Config("window_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(MetricsError::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Build the `(premise, hypothesis)` pair for one evidence window. Parts are
/// joined with a newline.
pub fn make_nli_pair(
    example: &Example,
    response_text: &str,
    flavor: NliFlavor,
    evidence_window: &str,
) -> Result<(String, String), MetricsError> {
    if response_text.trim().is_empty() {
        return Err(MetricsError::EmptyHypothesis);
    }
    if evidence_window.trim().is_empty() {
        return Err(MetricsError::EmptyPremise);
    }
    let question = example.final_query.text.as_str();
    let pair = match flavor {
        NliFlavor::V1 => (format!("{evidence_window}\n{question}"), response_text.to_string()),
        NliFlavor::V2 => (evidence_window.to_string(), format!("{question}\n{response_text}")),
        NliFlavor::V3 => (format!("{evidence_window}\n{question}"), format!("{question}\n{response_text}")),
    };
    Ok(pair)
}

/// Consecutive runs of `k` sentences (stride 1). When `k` covers the whole
/// passage there is a single window: the original evidence text.
pub fn evidence_windows(evidence: &EvidenceDoc, k: usize) -> Vec<String> {
    let n = evidence.sentences.len();
    if k == 0 || k >= n {
        return vec![evidence.text.clone()];
    }
    evidence.sentences.windows(k).map(|w| w.join(" ")).collect()
}

/// Per-window entailment scores of one reply.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    pub scores: Vec<f64>,
}

impl WindowScores {
    pub fn compute(
        evidence: &EvidenceDoc,
        example: &Example,
        response_text: &str,
        config: &AttributionConfig,
        nli: &dyn Entailment,
    ) -> Result<Self, MetricsError> {
        config.validate()?;
        let mut scores = Vec::new();
        for (window, text) in evidence_windows(evidence, config.window_k).iter().enumerate() {
            let (premise, hypothesis) = make_nli_pair(example, response_text, config.flavor, text)?;
            let score = nli.entail(&premise, &hypothesis).map_err(|source| MetricsError::Nli { window, source })?;
            scores.push(score);
        }
        Ok(Self { scores })
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn best_window(&self) -> Option<usize> {
        let best = self.max();
        self.scores.iter().position(|s| *s == best)
    }
}

/// Max entailment over all K-sentence windows of the evidence.
pub fn localized_attribution(
    evidence: &EvidenceDoc,
    example: &Example,
    response_text: &str,
    config: &AttributionConfig,
    nli: &dyn Entailment,
) -> Result<f64, MetricsError> {
    Ok(WindowScores::compute(evidence, example, response_text, config, nli)?.max())
}

pub fn attribution_label(score: f64, threshold: f64) -> bool {
    score >= threshold
}

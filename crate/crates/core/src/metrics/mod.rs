//! Auto-metrics: localized NLI attribution, rater aggregation, F1 and
//! alignment statistics against human labels.

mod attribution;
mod sentences;

pub use attribution::{
    attribution_label, evidence_windows, localized_attribution, make_nli_pair, AttributionConfig, AttributionTarget,
    NliFlavor, WindowScores,
};
pub use sentences::{split_sentences, ABBREVIATIONS};

use serde::{Deserialize, Serialize};

use crate::modelgw::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("response text is empty; nothing to use as NLI hypothesis")]
    EmptyHypothesis,
    #[error("evidence window is empty")]
    EmptyPremise,
    #[error("NLI call failed on evidence window {window}: {source}")]
    Nli {
        window: usize,
        #[source]
        source: GatewayError,
    },
    #[error("majority vote needs an odd number of votes, got {0}")]
    Parity(usize),
    #[error("cannot aggregate an empty set of {0}")]
    Empty(&'static str),
    #[error("prediction/human lists differ in length ({predicted} vs {human})")]
    Pairing { predicted: usize, human: usize },
    #[error("invalid attribution config: {0}")]
    Config(String),
}

/// A generated reply with both auto-metric scores attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub example_id: String,
    pub prompt_label: String,
    pub response_text: String,
    pub sensibleness: f64,
    pub attribution_score: f64,
    /// `attribution_score >= threshold` under the run's attribution config.
    pub attributable: bool,
}

/// Aggregated metrics of one experiment: one dot on a fluency/attribution
/// plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPoint {
    pub label: String,
    pub mean_sensibleness: f64,
    pub mean_attribution: f64,
    pub f1: f64,
    pub n_examples: usize,
}

impl ExperimentPoint {
    pub fn from_means(
        label: impl Into<String>,
        mean_sensibleness: f64,
        mean_attribution: f64,
        n_examples: usize,
    ) -> Self {
        Self {
            label: label.into(),
            mean_sensibleness,
            mean_attribution,
            f1: harmonic_f1(mean_sensibleness, mean_attribution),
            n_examples,
        }
    }

    pub fn from_responses(label: impl Into<String>, responses: &[ScoredResponse]) -> Result<Self, MetricsError> {
        if responses.is_empty() {
            return Err(MetricsError::Empty("responses"));
        }
        let n = responses.len() as f64;
        let sens = responses.iter().map(|r| r.sensibleness).sum::<f64>() / n;
        let attr = responses.iter().map(|r| r.attribution_score).sum::<f64>() / n;
        Ok(Self::from_means(label, sens, attr, responses.len()))
    }
}

/// Harmonic mean of two scores; zero when their sum is zero.
pub fn harmonic_f1(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn experiment_point(responses: &[ScoredResponse], label: &str) -> Result<ExperimentPoint, MetricsError> {
    ExperimentPoint::from_responses(label, responses)
}

/// True iff a strict majority of an odd number of votes is true.
pub fn majority_vote(votes: &[bool]) -> Result<bool, MetricsError> {
    if votes.len().is_multiple_of(2) {
        return Err(MetricsError::Parity(votes.len()));
    }
    let yes = votes.iter().filter(|v| **v).count();
    Ok(2 * yes > votes.len())
}

/// Fraction of raters that voted yes, e.g. 2 of 5 gives 0.4.
pub fn fraction_score(votes: &[bool]) -> Result<f64, MetricsError> {
    if votes.is_empty() {
        return Err(MetricsError::Empty("votes"));
    }
    Ok(votes.iter().filter(|v| **v).count() as f64 / votes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub mse: f64,
    /// Human said 1, prediction said 0.
    pub flip_1_to_0: f64,
    /// Human said 0, prediction said 1.
    pub flip_0_to_1: f64,
    pub accuracy_error: f64,
}

/// Compare id-aligned `(score, label)` predictions with human ratings.
pub fn alignment_stats(predicted: &[(f64, bool)], human: &[(f64, bool)]) -> Result<AlignmentStats, MetricsError> {
    if predicted.len() != human.len() {
        return Err(MetricsError::Pairing { predicted: predicted.len(), human: human.len() });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty("alignment pairs"));
    }
    let n = predicted.len() as f64;
    let mut sq = 0.0;
    let (mut one_zero, mut zero_one) = (0usize, 0usize);
    for ((ps, pl), (hs, hl)) in predicted.iter().zip(human) {
        sq += (ps - hs) * (ps - hs);
        match (hl, pl) {
            (true, false) => one_zero += 1,
            (false, true) => zero_one += 1,
            _ => {}
        }
    }
    let flip_1_to_0 = one_zero as f64 / n;
    let flip_0_to_1 = zero_one as f64 / n;
    Ok(AlignmentStats { mse: sq / n, flip_1_to_0, flip_0_to_1, accuracy_error: (one_zero + zero_one) as f64 / n })
}

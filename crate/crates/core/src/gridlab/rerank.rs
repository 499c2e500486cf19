//! Input-level re-ranking: pick one reply per example from several
//! experiments and aggregate the picks into a new point.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GridError;
use crate::metrics::{experiment_point, ExperimentPoint, ScoredResponse};

pub const DEFAULT_SENSIBLENESS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub example_id: String,
    pub chosen: ScoredResponse,
    /// No candidate passed the sensibleness filter; chosen without it.
    pub fallback: bool,
    pub n_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub point: ExperimentPoint,
    pub selections: Vec<Selection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum RerankPolicy {
    MaxAttr,
    SensibleThenAttr {
        threshold: f64,
    },
    /// Experimental: argmax of `a * sensibleness + b * attribution`.
    Linear {
        a: f64,
        b: f64,
    },
}

impl RerankPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            RerankPolicy::MaxAttr => "max-attr",
            RerankPolicy::SensibleThenAttr { .. } => "sensible-then-attr",
            RerankPolicy::Linear { .. } => "linear",
        }
    }

    pub fn apply(
        &self,
        candidates: &BTreeMap<String, Vec<ScoredResponse>>,
        label: &str,
    ) -> Result<RerankOutcome, GridError> {
        match *self {
            RerankPolicy::MaxAttr => rerank_max_attribution(candidates, label),
            RerankPolicy::SensibleThenAttr { threshold } => {
                rerank_sensible_then_attribution(candidates, threshold, label)
            }
            RerankPolicy::Linear { a, b } => rerank_linear(candidates, a, b, label),
        }
    }
}

impl fmt::Display for RerankPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RerankPolicy {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-attr" => Ok(RerankPolicy::MaxAttr),
            "sensible-then-attr" => Ok(RerankPolicy::SensibleThenAttr { threshold: DEFAULT_SENSIBLENESS_THRESHOLD }),
            other => Err(GridError::Config(format!(
                "unknown re-ranking policy '{other}' (expected max-attr or sensible-then-attr)"
            ))),
        }
    }
}

/// Higher key wins; equal keys go to the lexicographically lowest label,
/// then to the earliest candidate.
fn argmax_by<'a>(
    cands: impl Iterator<Item = &'a ScoredResponse>,
    key: impl Fn(&ScoredResponse) -> f64,
) -> Option<&'a ScoredResponse> {
    let mut best: Option<&ScoredResponse> = None;
    for c in cands {
        best = match best {
            None => Some(c),
            Some(b) => match key(c).total_cmp(&key(b)) {
                Ordering::Greater => Some(c),
                Ordering::Equal if c.prompt_label < b.prompt_label => Some(c),
                _ => Some(b),
            },
        };
    }
    best
}

fn aggregate(selections: Vec<Selection>, label: &str) -> Result<RerankOutcome, GridError> {
    let chosen: Vec<ScoredResponse> = selections.iter().map(|s| s.chosen.clone()).collect();
    Ok(RerankOutcome { point: experiment_point(&chosen, label)?, selections })
}

fn non_empty<'a>(example_id: &str, cands: &'a [ScoredResponse]) -> Result<&'a [ScoredResponse], GridError> {
    if cands.is_empty() {
        return Err(GridError::Selection(format!("example '{example_id}' has no candidates")));
    }
    Ok(cands)
}

pub fn rerank_max_attribution(
    candidates_by_example: &BTreeMap<String, Vec<ScoredResponse>>,
    label: &str,
) -> Result<RerankOutcome, GridError> {
    let mut selections = Vec::with_capacity(candidates_by_example.len());
    for (id, cands) in candidates_by_example {
        let cands = non_empty(id, cands)?;
        let chosen = argmax_by(cands.iter(), |c| c.attribution_score).expect("non-empty");
        selections.push(Selection {
            example_id: id.clone(),
            chosen: chosen.clone(),
            fallback: false,
            n_candidates: cands.len(),
        });
    }
    aggregate(selections, label)
}

pub fn rerank_sensible_then_attribution(
    candidates_by_example: &BTreeMap<String, Vec<ScoredResponse>>,
    threshold: f64,
    label: &str,
) -> Result<RerankOutcome, GridError> {
    let mut selections = Vec::with_capacity(candidates_by_example.len());
    for (id, cands) in candidates_by_example {
        let cands = non_empty(id, cands)?;
        let sensible = argmax_by(cands.iter().filter(|c| c.sensibleness >= threshold), |c| c.attribution_score);
        let (chosen, fallback) = match sensible {
            Some(c) => (c, false),
            None => (argmax_by(cands.iter(), |c| c.attribution_score).expect("non-empty"), true),
        };
        selections.push(Selection {
            example_id: id.clone(),
            chosen: chosen.clone(),
            fallback,
            n_candidates: cands.len(),
        });
    }
    aggregate(selections, label)
}

pub fn rerank_linear(
    candidates_by_example: &BTreeMap<String, Vec<ScoredResponse>>,
    a: f64,
    b: f64,
    label: &str,
) -> Result<RerankOutcome, GridError> {
    let mut selections = Vec::with_capacity(candidates_by_example.len());
    for (id, cands) in candidates_by_example {
        let cands = non_empty(id, cands)?;
        let chosen = argmax_by(cands.iter(), |c| a * c.sensibleness + b * c.attribution_score).expect("non-empty");
        selections.push(Selection {
            example_id: id.clone(),
            chosen: chosen.clone(),
            fallback: false,
            n_candidates: cands.len(),
        });
    }
    aggregate(selections, label)
}

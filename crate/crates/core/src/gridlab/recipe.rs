//! Retrieve `k1` passages once, prompt with every consecutive block of `K`
//! passages for each `K <= k2`, then keep the most attributable sensible
//! reply.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_and_score, rerank_sensible_then_attribution, GridError, Scorers, Selection, DEFAULT_SENSIBLENESS_THRESHOLD,
};
use crate::corpus::Example;
use crate::metrics::{AttributionConfig, ScoredResponse};
use crate::modelgw::GenerationConfig;
use crate::promptkit::PromptAssembler;
use crate::retrieval::{retrieve_topk, EvidenceDoc, Index};
use crate::seed::derive_seed;

fn default_threshold() -> f64 {
    DEFAULT_SENSIBLENESS_THRESHOLD
}

fn default_multiplier() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeConfig {
    pub k1: usize,
    pub k2: usize,
    #[serde(default = "default_threshold")]
    pub sensibleness_threshold: f64,
    pub generation: GenerationConfig,
    /// Inferences per block; 1 runs the minimum.
    #[serde(default = "default_multiplier")]
    pub multiplier: usize,
    #[serde(default)]
    pub include_instructions: bool,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default)]
    pub assembler: PromptAssembler,
    #[serde(default)]
    pub seed: u64,
}

impl RecipeConfig {
    pub fn new(k1: usize, k2: usize, generation: GenerationConfig) -> Self {
        Self {
            k1,
            k2,
            sensibleness_threshold: DEFAULT_SENSIBLENESS_THRESHOLD,
            generation,
            multiplier: 1,
            include_instructions: false,
            attribution: AttributionConfig::default(),
            assembler: PromptAssembler::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.k2 == 0 || self.k2 > self.k1 {
            return Err(GridError::Config(format!("need 1 <= k2 <= k1, got k1={} k2={}", self.k1, self.k2)));
        }
        if self.multiplier == 0 {
            return Err(GridError::Config("multiplier must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sensibleness_threshold) {
            return Err(GridError::Config(format!("threshold {} outside [0,1]", self.sensibleness_threshold)));
        }
        self.generation.validate()?;
        self.attribution.validate()?;
        Ok(())
    }
}

/// One prompt of the recipe: passages `start..end` of the ranked list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedInference {
    pub label: String,
    pub k: usize,
    pub block: usize,
    pub replica: usize,
    pub start: usize,
    pub end: usize,
}

/// Consecutive rank blocks of size `K` over `n_items` passages for every
/// `K` in `1..=k2`: `ceil(n_items / K)` blocks each, times `multiplier`.
pub fn plan_recipe(n_items: usize, k2: usize, multiplier: usize) -> Vec<PlannedInference> {
    let mut plan = Vec::new();
    if n_items == 0 {
        return plan;
    }
    for k in 1..=k2 {
        for (block, start) in (0..n_items).step_by(k).enumerate() {
            for replica in 0..multiplier {
                let mut label = format!("k{k:02}-b{block:02}");
                if multiplier > 1 {
                    label.push_str(&format!("-r{replica:02}"));
                }
                plan.push(PlannedInference { label, k, block, replica, start, end: (start + k).min(n_items) });
            }
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeOutcome {
    pub example_id: String,
    /// Passage ids in rank order.
    pub retrieved: Vec<String>,
    /// Fewer than `k1` passages were available.
    pub shortfall: bool,
    pub plan: Vec<PlannedInference>,
    pub candidates: Vec<ScoredResponse>,
    pub winner: Selection,
}

impl RecipeOutcome {
    pub fn response(&self) -> &ScoredResponse {
        &self.winner.chosen
    }
}

pub fn run_recipe(
    config: &RecipeConfig,
    example: &Example,
    index: &Index,
    scorers: Scorers<'_>,
) -> Result<RecipeOutcome, GridError> {
    config.validate()?;
    let hits = retrieve_topk(index, &example.final_query.text, config.k1)?;
    let shortfall = hits.len() < config.k1;
    if shortfall {
        tracing::warn!(example = %example.id, wanted = config.k1, got = hits.len(), "corpus smaller than k1; using every passage");
    }
    let docs: Vec<&EvidenceDoc> = hits.iter().filter_map(|(id, _)| index.doc(id)).collect();
    let plan = plan_recipe(docs.len(), config.k2, config.multiplier);
    if plan.is_empty() {
        return Err(GridError::Selection(format!("nothing retrieved for example '{}'", example.id)));
    }

    let candidates: Vec<ScoredResponse> = plan
        .par_iter()
        .map(|step| {
            let block = &docs[step.start..step.end];
            let prompt = config.assembler.assemble_with(example, config.include_instructions, true, block, false)?;
            let mut generation = config.generation.clone();
            generation.seed = Some(derive_seed(config.seed, &["recipe", &example.id, &step.label]));
            generate_and_score(example, &prompt, &step.label, block, &generation, &config.attribution, scorers)
        })
        .collect::<Result<_, GridError>>()?;

    let pool = BTreeMap::from([(example.id.clone(), candidates.clone())]);
    let outcome = rerank_sensible_then_attribution(&pool, config.sensibleness_threshold, "recipe")?;
    let winner = outcome.selections.into_iter().next().expect("one example in the pool");
    Ok(RecipeOutcome {
        example_id: example.id.clone(),
        retrieved: docs.iter().map(|d| d.id.clone()).collect(),
        shortfall,
        plan,
        candidates,
        winner,
    })
}

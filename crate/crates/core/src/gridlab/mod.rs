//! Experiment grids, re-ranking, the retrieve-then-rerank recipe and run
//! archives.

mod archive;
mod recipe;
mod rerank;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use archive::{
    load_run, save_run, ArchiveWriter, ArchivedResponse, IncompleteCell, Provenance, RunArchive, RunHeader,
    ARCHIVE_FORMAT, ARCHIVE_VERSION,
};
pub use recipe::{plan_recipe, run_recipe, PlannedInference, RecipeConfig, RecipeOutcome};
pub use rerank::{
    rerank_linear, rerank_max_attribution, rerank_sensible_then_attribution, RerankOutcome, RerankPolicy, Selection,
    DEFAULT_SENSIBLENESS_THRESHOLD,
};

use crate::corpus::Example;
use crate::metrics::{
    attribution_label, experiment_point, localized_attribution, AttributionConfig, AttributionTarget, ExperimentPoint,
    MetricsError, ScoredResponse,
};
use crate::modelgw::{
    dialog_context, Entailment, GatewayError, GenerationConfig, Generator, ModelSize, SensiblenessScorer,
};
use crate::promptkit::{parse_completion, validate_specs, EvidenceMode, PromptAssembler, PromptError, PromptSpec};
use crate::retrieval::{retrieve_for_example, select_non_evidence, EvidenceDoc, Index, RetrievalError};
use crate::seed::{content_hash, derive_seed, timestamp_secs};

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("selection failed: {0}")]
    Selection(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt archive {path} (line {line}): {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("archive version {found} is not supported (this build reads version {supported})")]
    Version { found: u64, supported: u32 },
}

/// One grid cell: a model, a temperature and a prompt type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub model: ModelSize,
    pub temperature: f64,
    pub prompt_label: String,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}/t{}/{}", self.model, self.temperature, self.prompt_label)
    }
}

fn default_temperatures() -> Vec<f64> {
    vec![0.0, 0.7]
}

fn default_max_tokens() -> u32 {
    256
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub model_ids: Vec<ModelSize>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "PromptSpec::golden_family")]
    pub prompt_specs: Vec<PromptSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default)]
    pub assembler: PromptAssembler,
    /// Put the golden passage into top-k lists that miss it.
    #[serde(default = "default_true")]
    pub inject_golden: bool,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl GridConfig {
    pub fn new(model_ids: Vec<ModelSize>, temperatures: Vec<f64>, prompt_specs: Vec<PromptSpec>, seed: u64) -> Self {
        Self {
            model_ids,
            temperatures,
            prompt_specs,
            seed,
            attribution: AttributionConfig::default(),
            assembler: PromptAssembler::default(),
            inject_golden: true,
            max_tokens: default_max_tokens(),
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.model_ids.is_empty() || self.temperatures.is_empty() || self.prompt_specs.is_empty() {
            return Err(GridError::Config("every grid axis needs at least one value".into()));
        }
        for (i, m) in self.model_ids.iter().enumerate() {
            if self.model_ids[..i].contains(m) {
                return Err(GridError::Config(format!("model {m} listed twice")));
            }
        }
        for (i, t) in self.temperatures.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(GridError::Config(format!("temperature {t} outside [0,1]")));
            }
            if self.temperatures[..i].contains(t) {
                return Err(GridError::Config(format!("temperature {t} listed twice")));
            }
        }
        if self.max_tokens == 0 {
            return Err(GridError::Config("max_tokens must be positive".into()));
        }
        validate_specs(&self.prompt_specs)?;
        self.attribution.validate()?;
        Ok(())
    }

    /// Cells in model, temperature, prompt order.
    pub fn cells(&self) -> Vec<(CellKey, &PromptSpec)> {
        let mut out = Vec::new();
        for m in &self.model_ids {
            for t in &self.temperatures {
                for s in &self.prompt_specs {
                    out.push((CellKey { model: *m, temperature: *t, prompt_label: s.label.clone() }, s));
                }
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.model_ids.len() * self.temperatures.len() * self.prompt_specs.len()
    }
}

/// The three scoring backends.
#[derive(Clone, Copy)]
pub struct Scorers<'a> {
    pub generator: &'a dyn Generator,
    pub nli: &'a dyn Entailment,
    pub sensibleness: &'a SensiblenessScorer,
}

/// Generate one reply and attach both auto-metrics. An empty completion
/// scores zero on both axes.
pub fn generate_and_score(
    example: &Example,
    prompt: &str,
    label: &str,
    shown: &[&EvidenceDoc],
    generation: &GenerationConfig,
    attribution: &AttributionConfig,
    scorers: Scorers<'_>,
) -> Result<ScoredResponse, GridError> {
    let raw = scorers.generator.generate(prompt, generation)?;
    let Some(text) = parse_completion(&raw) else {
        return Ok(ScoredResponse {
            example_id: example.id.clone(),
            prompt_label: label.to_string(),
            response_text: String::new(),
            sensibleness: 0.0,
            attribution_score: 0.0,
            attributable: false,
        });
    };
    let sensibleness = scorers.sensibleness.score(&dialog_context(example), &text)?;
    let attribution_score = match attribution.target {
        AttributionTarget::Golden => {
            localized_attribution(&example.golden_evidence, example, &text, attribution, scorers.nli)?
        }
        AttributionTarget::Provided => {
            let mut best = 0.0f64;
            for doc in shown {
                best = best.max(localized_attribution(doc, example, &text, attribution, scorers.nli)?);
            }
            best
        }
    };
    Ok(ScoredResponse {
        example_id: example.id.clone(),
        prompt_label: label.to_string(),
        response_text: text,
        sensibleness,
        attribution_score,
        attributable: attribution_label(attribution_score, attribution.threshold),
    })
}

/// Examples, retrieval index and backends a grid runs against.
pub struct GridDeps<'a> {
    pub examples: &'a [Example],
    pub index: &'a Index,
    pub scorers: Scorers<'a>,
    /// Backend name → url or mock identifier, for provenance.
    pub backends: BTreeMap<String, String>,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub points: Vec<(CellKey, ExperimentPoint)>,
    pub archive: RunArchive,
    pub incomplete_cells: Vec<CellKey>,
}

fn run_cell_example(
    config: &GridConfig,
    cell: &CellKey,
    spec: &PromptSpec,
    example: &Example,
    deps: &GridDeps<'_>,
) -> Result<ScoredResponse, GridError> {
    let index = deps.index;
    let retrieved: Vec<&EvidenceDoc>;
    let docs: Vec<&EvidenceDoc> = match spec.evidence_mode {
        EvidenceMode::Absent => vec![],
        EvidenceMode::Golden | EvidenceMode::OneShotGolden => vec![&example.golden_evidence],
        EvidenceMode::Retrieved { k } => {
            retrieved = retrieve_for_example(example, index, k, config.inject_golden)?;
            retrieved
        }
        EvidenceMode::NonEvidence { selection } => vec![select_non_evidence(example, index, selection, config.seed)?],
    };
    let prompt = if matches!(spec.evidence_mode, EvidenceMode::Retrieved { .. }) && !config.inject_golden {
        config.assembler.assemble_with(example, spec.include_instructions, spec.include_history, &docs, false)?
    } else {
        config.assembler.assemble(example, spec, &docs)?
    };
    let mut generation = GenerationConfig::new(cell.model, cell.temperature);
    generation.max_tokens = config.max_tokens;
    generation.seed = Some(derive_seed(config.seed, &["generate", &cell.label(), &example.id]));
    generate_and_score(example, &prompt, &spec.label, &docs, &generation, &config.attribution, deps.scorers)
}

fn run_id(config_json: &serde_json::Value, examples_hash: &str) -> String {
    content_hash(format!("{config_json}\n{examples_hash}").as_bytes())[..16].to_string()
}

/// Hash of the example set a run used.
pub fn examples_hash(examples: &[Example]) -> String {
    content_hash(&serde_json::to_vec(examples).expect("examples serialize"))
}

/// Hash of the documents behind an index.
pub fn index_hash(index: &Index) -> String {
    content_hash(&serde_json::to_vec(index.docs()).expect("documents serialize"))
}

/// Run every (model, temperature, prompt) cell over the same examples.
/// Backend failures mark a cell incomplete instead of aborting the run.
pub fn run_grid(config: &GridConfig, deps: &GridDeps<'_>) -> Result<GridOutcome, GridError> {
    config.validate()?;
    if deps.examples.is_empty() {
        return Err(GridError::Config("the example set is empty".into()));
    }
    let mut examples: Vec<&Example> = deps.examples.iter().collect();
    examples.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = examples.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(GridError::Config(format!("duplicate example id '{}'", w[0].id)));
    }

    let cells = config.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..examples.len()).map(move |e| (c, e))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(deps.jobs)
        .build()
        .map_err(|e| GridError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ScoredResponse, String>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, e)| {
                let (cell, spec) = &cells[c];
                run_cell_example(config, cell, spec, examples[e], deps).map_err(|err| err.to_string())
            })
            .collect()
    });

    let config_json = serde_json::to_value(config).expect("grid config serializes");
    let sorted: Vec<Example> = examples.iter().map(|e| (*e).clone()).collect();
    let ex_hash = examples_hash(&sorted);
    let header = RunHeader {
        run_id: run_id(&config_json, &ex_hash),
        kind: "grid".into(),
        config: config_json,
        provenance: Provenance {
            backends: deps.backends.clone(),
            seed: config.seed,
            created_at: timestamp_secs(),
            inputs: BTreeMap::from([("examples".to_string(), ex_hash), ("index".to_string(), index_hash(deps.index))]),
        },
    };
    let mut archive = RunArchive::new(header);
    let mut points = Vec::new();
    let mut incomplete_cells = Vec::new();
    let mut results = results.into_iter();
    for (cell, _) in &cells {
        let mut ok = Vec::with_capacity(examples.len());
        let mut failed = false;
        for example in &examples {
            match results.next().expect("one result per task") {
                Ok(r) => {
                    archive.responses.push(ArchivedResponse { cell: cell.clone(), response: r.clone() });
                    ok.push(r);
                }
                Err(error) => {
                    tracing::warn!(cell = %cell.label(), example = %example.id, %error, "cell incomplete");
                    archive.incomplete.push(IncompleteCell {
                        cell: cell.clone(),
                        example_id: example.id.clone(),
                        error,
                    });
                    failed = true;
                }
            }
        }
        if failed {
            incomplete_cells.push(cell.clone());
        } else {
            points.push((cell.clone(), experiment_point(&ok, &cell.label())?));
        }
    }
    Ok(GridOutcome { points, archive, incomplete_cells })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::corpus::test_support::dialog_example;
    use crate::retrieval::build_index;

    pub const TOPICS: [&str; 6] = ["river", "mountain", "castle", "harbor", "forest", "desert"];

    /// `n` two-turn dialogs, each with its own evidence passage, plus an index
    /// over all passages.
    pub fn synthetic(n: usize) -> (Vec<Example>, Index) {
        let examples: Vec<Example> = (0..n)
            .map(|i| {
                let topic = TOPICS[i % TOPICS.len()];
                let evidence = format!(
                    "The {topic} number {i} is near the town of Ville{i}. It was first mapped in {y}. \
                     Visitors come every summer to see the {topic}. Local guides tell old stories about it.",
                    y = 1800 + i
                );
                dialog_example(
                    &format!("ex{i:03}"),
                    &[&format!("Tell me about {topic} {i}."), &format!("The {topic} {i} is well known.")],
                    &format!("When was the {topic} number {i} first mapped?"),
                    &format!("It was first mapped in {}.", 1800 + i),
                    &evidence,
                )
            })
            .collect();
        let index = build_index(examples.iter().map(|e| e.golden_evidence.clone()).collect(), 1.2, 0.75).unwrap();
        (examples, index)
    }
}

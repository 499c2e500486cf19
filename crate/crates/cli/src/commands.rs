use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use attrib_core::corpus::{
    apply_filters, load_dataset, sample_examples, write_dataset, DatasetFormat, Example, FilterConfig,
};
use attrib_core::gridlab::{
    load_run, run_grid, run_recipe, save_run, GridConfig, GridDeps, RecipeConfig, RerankOutcome, RerankPolicy,
    RunArchive, Selection,
};
use attrib_core::metrics::{alignment_stats, ExperimentPoint};
use attrib_core::modelgw::{GenerationConfig, ModelSize};
use attrib_core::plots::{emit_plot, Overlay, OverlayKind, PlotSpec, PointStyle, StyledPoint};
use attrib_core::promptkit::PromptSpec;
use attrib_core::retrieval::{
    build_index, documents_from_examples, interpolate_recall, load_documents, recall_at_k, retrieve_topk, Index,
    RecallPoint, DEFAULT_B, DEFAULT_K1,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backends::{self, Backends};
use crate::config::{split_list, RunConfig, Section};
use crate::*;

struct Ctx {
    config: RunConfig,
    seed_flag: Option<u64>,
    jobs: usize,
}

impl Ctx {
    /// `--seed`, else the section's seed, else the top-level seed, else 0.
    fn seed(&self, section: &Section<'_>) -> Result<u64> {
        if let Some(s) = self.seed_flag {
            return Ok(s);
        }
        Ok(section.get("seed")?.or(self.config.seed).unwrap_or(0))
    }

    fn backends(&self) -> Result<Backends> {
        backends::build(&self.config.backends)
    }
}

pub(crate) fn run(cli: Cli) -> Result<i32> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(mode) = cli.backend {
        config.backends.mode = mode;
    }
    if cli.record.is_some() {
        config.backends.record = cli.record;
    }
    if cli.replay.is_some() {
        config.backends.replay = cli.replay;
    }
    let jobs = cli.jobs.or(config.jobs).unwrap_or(0);
    let ctx = Ctx { config, seed_flag: cli.seed, jobs };
    match cli.command {
        Command::Corpus(CorpusCmd::Filter(a)) => corpus_filter(&ctx, a),
        Command::Corpus(CorpusCmd::Sample(a)) => corpus_sample(&ctx, a),
        Command::Retrieve(RetrieveCmd::Index(a)) => retrieve_index(&ctx, a),
        Command::Retrieve(RetrieveCmd::Query(a)) => retrieve_query(&ctx, a),
        Command::Retrieve(RetrieveCmd::Recall(a)) => retrieve_recall(&ctx, a),
        Command::Retrieve(RetrieveCmd::Simulate(a)) => retrieve_simulate(a),
        Command::Grid(GridCmd::Run(a)) => grid_run(&ctx, a),
        Command::Grid(GridCmd::Rerank(a)) => grid_rerank(&ctx, a),
        Command::Recipe(RecipeCmd::Run(a)) => recipe_run(&ctx, a),
        Command::Metrics(MetricsCmd::SweepThreshold(a)) => metrics_sweep(a),
        Command::Metrics(MetricsCmd::Align(a)) => metrics_align(a),
        Command::Plot(a) => plot(&ctx, a),
    }
}

/// Pretty JSON to `out`, or to stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display())),
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                // a closed pipe (`| head`) is not worth failing over
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn dataset_format(raw: Option<String>) -> Result<DatasetFormat> {
    raw.as_deref().unwrap_or("jsonl").parse().map_err(|e: String| anyhow!(e))
}

fn load_examples(path: &Path, format: DatasetFormat) -> Result<Vec<Example>> {
    let loaded = load_dataset(path, format)?;
    for r in &loaded.rejects {
        tracing::warn!(line = r.line, id = ?r.id, reason = %r.reason, "skipped record");
    }
    if loaded.examples.is_empty() {
        bail!("no usable examples in {}", path.display());
    }
    Ok(loaded.examples)
}

/// Load the index at `path`, or build one over the examples' evidence.
fn index_or_build(path: Option<PathBuf>, examples: &[Example]) -> Result<Index> {
    match path {
        Some(p) => Ok(Index::load(&p)?),
        None => Ok(build_index(documents_from_examples(examples), DEFAULT_K1, DEFAULT_B)?),
    }
}

fn corpus_filter(ctx: &Ctx, a: FilterArgs) -> Result<i32> {
    let s = Section::new("corpus", &ctx.config.corpus);
    let input: PathBuf = s.require(a.input, "in", "--in")?;
    let out: PathBuf = s.require(a.out, "out", "--out")?;
    let report_path: Option<PathBuf> = s.pick(a.report, "report")?;
    let format = dataset_format(s.pick(a.format, "format")?)?;

    let names: Option<Vec<String>> = match a.filters {
        Some(raw) => Some(split_list(&raw, "filter name")?),
        None => s.get("filters")?,
    };
    let mut filters = match names {
        Some(n) => FilterConfig::with_filter_names(&n)?,
        None => FilterConfig::default(),
    };
    if let Some(cap) = s.pick(a.max_evidence_tokens, "max_evidence_tokens")? {
        filters.max_evidence_tokens = cap;
    }
    if let Some(unit) = s.pick::<String>(a.token_unit, "token_unit")? {
        filters.token_unit = unit.parse().map_err(|e: String| anyhow!(e))?;
    }

    let loaded = load_dataset(&input, format)?;
    for r in &loaded.rejects {
        tracing::warn!(line = r.line, id = ?r.id, reason = %r.reason, "skipped record");
    }
    let (kept, report) = apply_filters(&loaded.examples, &filters)?;
    write_dataset(&out, &kept)?;
    if let Some(p) = &report_path {
        emit(&report, Some(p))?;
    }
    emit(&json!({ "report": report, "malformed_records": loaded.rejects.len() }), None)?;
    Ok(EXIT_OK)
}

fn corpus_sample(ctx: &Ctx, a: SampleArgs) -> Result<i32> {
    let s = Section::new("corpus", &ctx.config.corpus);
    let input: PathBuf = s.require(a.input, "in", "--in")?;
    let out: PathBuf = s.require(a.out, "out", "--out")?;
    let n: usize = s.require(a.n, "sample", "--n")?;
    let examples = load_examples(&input, dataset_format(s.pick(a.format, "format")?)?)?;
    let picked = sample_examples(&examples, n, ctx.seed(&s)?)?;
    write_dataset(&out, &picked)?;
    emit(&json!({ "sampled": picked.len(), "from": examples.len() }), None)?;
    Ok(EXIT_OK)
}

fn retrieve_index(ctx: &Ctx, a: IndexArgs) -> Result<i32> {
    let s = Section::new("retrieve", &ctx.config.retrieve);
    let out: PathBuf = s.require(a.out, "index", "--out")?;
    let docs = match (a.corpus, a.dataset) {
        (Some(c), _) => load_documents(&c)?,
        (None, Some(d)) => documents_from_examples(&load_examples(&d, dataset_format(s.pick(a.format, "format")?)?)?),
        (None, None) => match (s.get::<PathBuf>("corpus")?, s.get::<PathBuf>("dataset")?) {
            (Some(c), _) => load_documents(&c)?,
            (None, Some(d)) => documents_from_examples(&load_examples(&d, dataset_format(s.get("format")?)?)?),
            (None, None) => bail!("missing --corpus or --dataset"),
        },
    };
    let k1 = s.pick(a.k1, "k1")?.unwrap_or(DEFAULT_K1);
    let b = s.pick(a.b, "b")?.unwrap_or(DEFAULT_B);
    let index = build_index(docs, k1, b)?;
    index.save(&out)?;
    emit(&json!({ "documents": index.corpus_size, "index": out }), None)?;
    Ok(EXIT_OK)
}

fn retrieve_query(ctx: &Ctx, a: QueryArgs) -> Result<i32> {
    let s = Section::new("retrieve", &ctx.config.retrieve);
    let path: PathBuf = s.require(a.index, "index", "--index")?;
    let index = Index::load(&path)?;
    let hits: Vec<Value> = retrieve_topk(&index, &a.q, a.k)?
        .into_iter()
        .enumerate()
        .map(|(rank, (id, score))| json!({ "rank": rank + 1, "id": id, "score": score }))
        .collect();
    emit(&hits, None)?;
    Ok(EXIT_OK)
}

fn retrieve_recall(ctx: &Ctx, a: RecallArgs) -> Result<i32> {
    let s = Section::new("retrieve", &ctx.config.retrieve);
    let dataset: PathBuf = s.require(a.dataset, "dataset", "--dataset")?;
    let examples = load_examples(&dataset, dataset_format(s.pick(a.format, "format")?)?)?;
    let index = index_or_build(s.pick(a.index, "index")?, &examples)?;
    let recall = recall_at_k(&examples, &index, a.k)?;
    emit(&json!({ "k": a.k, "recall": recall, "examples": examples.len() }), None)?;
    Ok(EXIT_OK)
}

/// One interpolated line written by `retrieve simulate`.
#[derive(Debug, Serialize, Deserialize)]
struct SimulatedLine {
    label: String,
    kind: OverlayKind,
    model: ModelSize,
    temperature: f64,
    golden: String,
    nonevidence: String,
    points: Vec<RecallPoint>,
}

/// Complete-cell points of several archives, keyed by cell label.
fn archive_points(paths: &[PathBuf]) -> Result<Vec<(attrib_core::gridlab::CellKey, ExperimentPoint)>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_run(p)?.points()?);
    }
    Ok(out)
}

fn retrieve_simulate(a: SimulateArgs) -> Result<i32> {
    let kind = match a.kind.as_str() {
        "recall" => OverlayKind::Recall,
        "top-k" | "topk" => OverlayKind::TopK,
        other => bail!("unknown simulation kind '{other}' (expected recall or top-k)"),
    };
    if a.points < 2 {
        bail!("--points must be at least 2");
    }
    let grid: Vec<f64> = (0..a.points).map(|i| i as f64 / (a.points - 1) as f64).collect();
    let points = archive_points(&a.archives)?;
    let mut lines = Vec::new();
    let mut groups: Vec<(ModelSize, f64)> = Vec::new();
    for (cell, _) in &points {
        if !groups.contains(&(cell.model, cell.temperature)) {
            groups.push((cell.model, cell.temperature));
        }
    }
    for (model, temperature) in groups {
        let find = |label: &str| {
            points
                .iter()
                .find(|(c, _)| c.model == model && c.temperature == temperature && c.prompt_label == label)
                .map(|(_, p)| p)
        };
        let (Some(golden), Some(nonevidence)) = (find(&a.golden), find(&a.nonevidence)) else { continue };
        lines.push(SimulatedLine {
            label: format!("{}-{model}-t{temperature}", a.kind),
            kind,
            model,
            temperature,
            golden: a.golden.clone(),
            nonevidence: a.nonevidence.clone(),
            points: interpolate_recall(golden, nonevidence, &grid)?,
        });
    }
    if lines.is_empty() {
        bail!("no (model, temperature) group has complete '{}' and '{}' cells", a.golden, a.nonevidence);
    }
    emit(&lines, a.out.as_deref())?;
    Ok(EXIT_OK)
}

fn grid_config(ctx: &Ctx, s: &Section<'_>, a: &GridRunArgs) -> Result<GridConfig> {
    let mut map = s.without(&["dataset", "index", "out", "format", "prompts"]);
    map.entry("model_ids").or_insert_with(|| json!(ModelSize::ALL));
    let mut config: GridConfig = serde_json::from_value(Value::Object(map)).context("invalid grid config section")?;
    if let Some(raw) = &a.models {
        config.model_ids = split_list(raw, "model size")?;
    }
    if let Some(raw) = &a.temperatures {
        config.temperatures = split_list(raw, "temperature")?;
    }
    let labels: Option<Vec<String>> = match &a.prompts {
        Some(raw) => Some(split_list(raw, "prompt label")?),
        None => s.get("prompts")?,
    };
    if let Some(labels) = labels {
        config.prompt_specs = labels
            .iter()
            .map(|l| PromptSpec::from_catalog(l).ok_or_else(|| anyhow!("unknown prompt label '{l}'")))
            .collect::<Result<_>>()?;
    }
    config.seed = ctx.seed(s)?;
    config.validate()?;
    Ok(config)
}

fn grid_run(ctx: &Ctx, a: GridRunArgs) -> Result<i32> {
    let s = Section::new("grid", &ctx.config.grid);
    let config = grid_config(ctx, &s, &a)?;
    let dataset: PathBuf = s.require(a.dataset, "dataset", "--dataset")?;
    let out: PathBuf = s.require(a.out, "out", "--out")?;
    let examples = load_examples(&dataset, dataset_format(s.pick(a.format, "format")?)?)?;
    let index = index_or_build(s.pick(a.index, "index")?, &examples)?;
    let backends = ctx.backends()?;
    let deps = GridDeps {
        examples: &examples,
        index: &index,
        scorers: backends.scorers(),
        backends: backends.provenance.clone(),
        jobs: ctx.jobs,
    };
    let outcome = run_grid(&config, &deps)?;
    save_run(&outcome.archive, &out)?;

    let incomplete: Vec<String> = outcome.incomplete_cells.iter().map(|c| c.label()).collect();
    let points: Vec<Value> = outcome.points.iter().map(|(c, p)| json!({ "cell": c.label(), "point": p })).collect();
    emit(
        &json!({ "run_id": outcome.archive.header.run_id, "archive": out, "points": points, "incomplete": incomplete }),
        None,
    )?;
    if incomplete.is_empty() {
        Ok(EXIT_OK)
    } else if outcome.points.is_empty() {
        eprintln!("error: every grid cell failed; see the archive for per-example errors");
        Ok(EXIT_BACKEND)
    } else {
        eprintln!("warning: {} of {} cells incomplete", incomplete.len(), config.size());
        Ok(EXIT_PARTIAL)
    }
}

/// Output of `grid rerank`: one re-ranked point per (model, temperature).
#[derive(Debug, Serialize, Deserialize)]
struct RerankReport {
    policy: RerankPolicy,
    groups: Vec<RerankGroup>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RerankGroup {
    model: ModelSize,
    temperature: f64,
    labels: Vec<String>,
    point: ExperimentPoint,
    /// Examples where no candidate passed the sensibleness filter.
    fallbacks: usize,
    selections: Vec<Selection>,
}

fn rerank_policy(s: &Section<'_>, a: &RerankArgs) -> Result<RerankPolicy> {
    let name: String = s.require(a.policy.clone(), "policy", "--policy")?;
    let threshold: Option<f64> = s.pick(a.threshold, "threshold")?;
    Ok(match name.as_str() {
        "linear" => {
            let weights: Vec<f64> = match &a.weights {
                Some(raw) => split_list(raw, "weight")?,
                None => s.get("weights")?.ok_or_else(|| anyhow!("the linear policy needs --weights a,b"))?,
            };
            let [w_sens, w_attr] = weights[..] else { bail!("--weights takes exactly two numbers") };
            RerankPolicy::Linear { a: w_sens, b: w_attr }
        }
        other => match (other.parse::<RerankPolicy>()?, threshold) {
            (RerankPolicy::SensibleThenAttr { .. }, Some(t)) => {
                if !(0.0..=1.0).contains(&t) {
                    bail!("--threshold {t} is outside [0,1]");
                }
                RerankPolicy::SensibleThenAttr { threshold: t }
            }
            (policy, _) => policy,
        },
    })
}

fn group_labels(archive: &RunArchive, model: ModelSize, temperature: f64, wanted: Option<&[String]>) -> Vec<String> {
    let mut labels: Vec<String> = archive
        .cells()
        .into_iter()
        .filter(|c| c.model == model && c.temperature == temperature && !archive.is_incomplete(c))
        .map(|c| c.prompt_label)
        .filter(|l| wanted.is_none_or(|w| w.contains(l)))
        .collect();
    labels.sort();
    labels.dedup();
    labels
}

fn grid_rerank(ctx: &Ctx, a: RerankArgs) -> Result<i32> {
    let s = Section::new("rerank", &ctx.config.rerank);
    let policy = rerank_policy(&s, &a)?;
    let path: PathBuf = s.require(a.archive.clone(), "archive", "--archive")?;
    let out: Option<PathBuf> = s.pick(a.out.clone(), "out")?;
    let wanted: Option<Vec<String>> = match &a.labels {
        Some(raw) => Some(split_list(raw, "prompt label")?),
        None => s.get("labels")?,
    };
    let archive = load_run(&path)?;
    let mut groups = Vec::new();
    for (model, temperature) in archive.groups() {
        let labels = group_labels(&archive, model, temperature, wanted.as_deref());
        if labels.is_empty() {
            continue;
        }
        let candidates = archive.candidates(model, temperature, Some(&labels));
        let RerankOutcome { point, selections } =
            policy.apply(&candidates, &format!("{model}/t{temperature}/{policy}"))?;
        let fallbacks = selections.iter().filter(|s| s.fallback).count();
        if fallbacks > 0 {
            tracing::warn!(%model, temperature, fallbacks, "no sensible candidate; fell back to max attribution");
        }
        groups.push(RerankGroup { model, temperature, labels, point, fallbacks, selections });
    }
    if groups.is_empty() {
        bail!("the archive has no complete cells to re-rank");
    }
    let report = RerankReport { policy, groups };
    match out {
        Some(p) => {
            emit(&report, Some(&p))?;
            let summary: Vec<&ExperimentPoint> = report.groups.iter().map(|g| &g.point).collect();
            emit(&summary, None)?;
        }
        None => emit(&report, None)?,
    }
    Ok(EXIT_OK)
}

fn recipe_run(ctx: &Ctx, a: RecipeArgs) -> Result<i32> {
    let s = Section::new("recipe", &ctx.config.recipe);
    let example_id: String = s.require(a.example, "example", "--example")?;
    let dataset: PathBuf = s.require(a.dataset, "dataset", "--dataset")?;
    let mut map = s.without(&["dataset", "index", "out", "format", "example", "model", "temperature"]);
    for (key, value) in
        [("k1", a.k1.map(Value::from)), ("k2", a.k2.map(Value::from)), ("multiplier", a.multiplier.map(Value::from))]
    {
        if let Some(v) = value {
            map.insert(key.into(), v);
        }
    }
    if let Some(t) = a.threshold {
        map.insert("sensibleness_threshold".into(), Value::from(t));
    }
    let model: Option<ModelSize> = match a.model {
        Some(raw) => Some(raw.parse().map_err(|e| anyhow!("{e}"))?),
        None => s.get("model")?,
    };
    let temperature: Option<f64> = s.pick(a.temperature, "temperature")?;
    map.entry("generation")
        .or_insert_with(|| json!(GenerationConfig::new(model.unwrap_or(ModelSize::L), temperature.unwrap_or(0.0))));
    for key in ["k1", "k2"] {
        if !map.contains_key(key) {
            bail!("missing --{key} (or \"{key}\" in the \"recipe\" config section)");
        }
    }
    let mut config: RecipeConfig =
        serde_json::from_value(Value::Object(map)).context("invalid recipe config section")?;
    if let Some(m) = model {
        config.generation.model_id = m;
    }
    if let Some(t) = temperature {
        config.generation.temperature = t;
    }
    config.seed = ctx.seed(&s)?;
    config.validate()?;

    let examples = load_examples(&dataset, dataset_format(s.pick(a.format, "format")?)?)?;
    let example = examples
        .iter()
        .find(|e| e.id == example_id)
        .ok_or_else(|| anyhow!("no example '{example_id}' in {}", dataset.display()))?;
    let index = index_or_build(s.pick(a.index, "index")?, &examples)?;
    let backends = ctx.backends()?;
    let outcome = run_recipe(&config, example, &index, backends.scorers())?;
    emit(&outcome, s.pick(a.out, "out")?.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
struct HumanLabel {
    example_id: String,
    prompt_label: String,
    label: bool,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    model: Option<ModelSize>,
    #[serde(default)]
    temperature: Option<f64>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn threshold_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&from) || !(0.0..=1.0).contains(&to) || from > to || step.is_nan() || step <= 0.0 {
        bail!("need 0 <= from <= to <= 1 and step > 0");
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    // rounded so that 0.05 steps print as 0.35, not 0.35000000000000003
    Ok((0..=n).map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9).collect())
}

fn metrics_sweep(a: SweepArgs) -> Result<i32> {
    let path = a.archive.ok_or_else(|| anyhow!("missing --archive"))?;
    let archive = load_run(&path)?;
    let responses: Vec<_> = archive.responses.iter().filter(|r| !archive.is_incomplete(&r.cell)).collect();
    if responses.is_empty() {
        bail!("the archive has no complete cells");
    }
    let thresholds = threshold_grid(a.from, a.to, a.step)?;

    let pairs: Option<Vec<(f64, f64, bool)>> = match &a.human {
        None => None,
        Some(h) => {
            let mut pairs = Vec::new();
            for row in read_jsonl::<HumanLabel>(h)? {
                let matches: Vec<_> = responses
                    .iter()
                    .filter(|r| {
                        r.response.example_id == row.example_id
                            && r.cell.prompt_label == row.prompt_label
                            && row.model.is_none_or(|m| m == r.cell.model)
                            && row.temperature.is_none_or(|t| t == r.cell.temperature)
                    })
                    .collect();
                match matches[..] {
                    [r] => pairs.push((
                        r.response.attribution_score,
                        row.score.unwrap_or(if row.label { 1.0 } else { 0.0 }),
                        row.label,
                    )),
                    [] => bail!("no archived response for {}/{}", row.example_id, row.prompt_label),
                    _ => bail!(
                        "{}/{} matches several cells; add \"model\" and \"temperature\"",
                        row.example_id,
                        row.prompt_label
                    ),
                }
            }
            Some(pairs)
        }
    };

    let mut rows = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let fraction =
            responses.iter().filter(|r| r.response.attribution_score >= t).count() as f64 / responses.len() as f64;
        let mut row = json!({ "threshold": t, "attributable_fraction": fraction });
        if let Some(pairs) = &pairs {
            let predicted: Vec<(f64, bool)> = pairs.iter().map(|(p, _, _)| (*p, *p >= t)).collect();
            let human: Vec<(f64, bool)> = pairs.iter().map(|(_, h, l)| (*h, *l)).collect();
            let stats = alignment_stats(&predicted, &human)?;
            row["accuracy"] = json!(1.0 - stats.accuracy_error);
            row["flip_1_to_0"] = json!(stats.flip_1_to_0);
            row["flip_0_to_1"] = json!(stats.flip_0_to_1);
        }
        rows.push(row);
    }
    emit(&rows, a.out.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
struct Rating {
    id: String,
    score: f64,
    label: bool,
}

fn metrics_align(a: AlignArgs) -> Result<i32> {
    let by_id = |path: &Path| -> Result<BTreeMap<String, (f64, bool)>> {
        let mut map = BTreeMap::new();
        for r in read_jsonl::<Rating>(path)? {
            if map.insert(r.id.clone(), (r.score, r.label)).is_some() {
                bail!("duplicate id '{}' in {}", r.id, path.display());
            }
        }
        Ok(map)
    };
    let predicted = by_id(&a.predicted)?;
    let human = by_id(&a.human)?;
    if let Some(id) = predicted
        .keys()
        .find(|k| !human.contains_key(*k))
        .or_else(|| human.keys().find(|k| !predicted.contains_key(*k)))
    {
        bail!("id '{id}' is rated in only one of the two files");
    }
    let stats =
        alignment_stats(&predicted.into_values().collect::<Vec<_>>(), &human.into_values().collect::<Vec<_>>())?;
    emit(&stats, a.out.as_deref())?;
    Ok(EXIT_OK)
}

fn plot(ctx: &Ctx, a: PlotArgs) -> Result<i32> {
    let s = Section::new("plot", &ctx.config.plot);
    let archives: Vec<PathBuf> =
        if a.archives.is_empty() { s.get("archives")?.unwrap_or_default() } else { a.archives };
    if archives.is_empty() {
        bail!("missing --archive");
    }
    let out: PathBuf = s.require(a.out, "out", "--out")?;
    let overlays: Vec<PathBuf> =
        if a.overlays.is_empty() { s.get("overlays")?.unwrap_or_default() } else { a.overlays };
    let reranks: Vec<PathBuf> = if a.reranks.is_empty() { s.get("reranks")?.unwrap_or_default() } else { a.reranks };

    let mut spec = PlotSpec::new(Vec::new());
    for path in &archives {
        spec.points.extend(PlotSpec::from_archive(&load_run(path)?)?.points);
    }
    for path in &reranks {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let report: RerankReport =
            serde_json::from_str(&text).with_context(|| format!("invalid rerank output {}", path.display()))?;
        let style = match report.policy {
            RerankPolicy::MaxAttr => PointStyle::MaxAttr,
            RerankPolicy::SensibleThenAttr { .. } => PointStyle::SensibleThenAttr,
            RerankPolicy::Linear { .. } => PointStyle::Other,
        };
        spec.points.extend(report.groups.into_iter().map(|g| StyledPoint { point: g.point, style }));
    }
    for path in &overlays {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let lines: Vec<SimulatedLine> =
            serde_json::from_str(&text).with_context(|| format!("invalid simulate output {}", path.display()))?;
        spec.overlays.extend(lines.into_iter().map(|l| Overlay { label: l.label, kind: l.kind, points: l.points }));
    }
    let iso: Option<Vec<f64>> = match a.iso {
        Some(raw) => Some(split_list(&raw, "iso-F1 level")?),
        None => s.get("iso")?,
    };
    if let Some(levels) = iso {
        spec.iso_f1_levels = levels;
    }

    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let (svg, csv) = (out.join("plot.svg"), out.join("plot.csv"));
    emit_plot(&spec, &svg, &csv)?;
    emit(&json!({ "svg": svg, "csv": csv, "points": spec.points.len(), "overlays": spec.overlays.len() }), None)?;
    Ok(EXIT_OK)
}

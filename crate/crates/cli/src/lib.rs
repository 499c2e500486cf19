//! `attrib`: command-line entry point over `attrib-core`.
//!
//! Exit codes: 0 success, 1 user error, 2 backend error, 3 partial
//! completion (some grid cells incomplete).

mod backends;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use attrib_core::gridlab::GridError;
use attrib_core::modelgw::GatewayError;
use clap::{Args, Parser, Subcommand};

pub use config::{BackendMode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "attrib", version, about = "Fluency/attribution evaluation harness for knowledge-grounded dialog")]
struct Cli {
    /// Run config (JSON) with one section per subcommand; flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Backend kind (default: http, configured from the environment).
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendMode>,
    /// Append every backend call to this session log.
    #[arg(long, global = true, value_name = "PATH")]
    record: Option<PathBuf>,
    /// Session log served by `--backend replay`.
    #[arg(long, global = true, value_name = "PATH")]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter and sample dialog datasets.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build and query BM25 indexes; simulate retrieval recall.
    #[command(subcommand)]
    Retrieve(RetrieveCmd),
    /// Run experiment grids and re-rank their responses.
    #[command(subcommand)]
    Grid(GridCmd),
    /// Retrieve-then-rerank recipe for one example.
    #[command(subcommand)]
    Recipe(RecipeCmd),
    /// Metric utilities: threshold sweeps and human alignment.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Render the fluency/attribution scatter plot (SVG + CSV).
    Plot(PlotArgs),
}

#[derive(Debug, Subcommand)]
enum CorpusCmd {
    /// Apply the filter chain and write the kept examples plus a report.
    Filter(FilterArgs),
    /// Seeded subsample of a dataset.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    #[arg(long)]
    max_evidence_tokens: Option<usize>,
    /// Comma-separated filter names, applied in the given order.
    #[arg(long)]
    filters: Option<String>,
    /// whitespace, chars or subword:<n>.
    #[arg(long)]
    token_unit: Option<String>,
    /// jsonl or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Subcommand)]
enum RetrieveCmd {
    /// Build an index from a document corpus or from a dataset's evidence.
    Index(IndexArgs),
    /// Top-k documents for a query.
    Query(QueryArgs),
    /// Fraction of examples whose golden passage is in the top k.
    Recall(RecallArgs),
    /// Interpolate between a golden and a non-evidence experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// JSONL documents {"id","text"}.
    #[arg(long, value_name = "PATH", conflicts_with = "dataset")]
    corpus: Option<PathBuf>,
    /// Dialog dataset; its golden evidence becomes the corpus.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, value_name = "PATH")]
    index: Option<PathBuf>,
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Debug, Args)]
struct RecallArgs {
    #[arg(long, value_name = "PATH")]
    index: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Grid archive; repeat to combine several runs.
    #[arg(long = "archive", value_name = "PATH", required = true)]
    archives: Vec<PathBuf>,
    /// Prompt label of the X = 1 experiment.
    #[arg(long, default_value = "golden")]
    golden: String,
    /// Prompt label of the X = 0 experiment.
    #[arg(long, default_value = "nextbest-nonevidence")]
    nonevidence: String,
    /// recall or top-k; only changes the overlay style.
    #[arg(long, default_value = "recall")]
    kind: String,
    /// Evenly spaced X values in [0,1].
    #[arg(long, default_value_t = 11)]
    points: usize,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum GridCmd {
    /// Run every (model, temperature, prompt) cell and archive the responses.
    Run(GridRunArgs),
    /// Pick one response per example across prompt types.
    Rerank(RerankArgs),
}

#[derive(Debug, Args)]
struct GridRunArgs {
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// BM25 index; built from the dataset's evidence when omitted.
    #[arg(long, value_name = "PATH")]
    index: Option<PathBuf>,
    /// Archive path (JSONL).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Comma-separated model sizes, e.g. S,M,L.
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated temperatures, e.g. 0,0.7.
    #[arg(long)]
    temperatures: Option<String>,
    /// Comma-separated prompt labels from the built-in catalog.
    #[arg(long)]
    prompts: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[arg(long, value_name = "PATH")]
    archive: Option<PathBuf>,
    /// max-attr, sensible-then-attr, or the experimental linear.
    #[arg(long)]
    policy: Option<String>,
    /// Sensibleness threshold for sensible-then-attr.
    #[arg(long)]
    threshold: Option<f64>,
    /// a,b weights for the linear policy.
    #[arg(long)]
    weights: Option<String>,
    /// Candidate prompt labels; default every label in the archive.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum RecipeCmd {
    /// Retrieve k1 passages, prompt over blocks of up to k2, rerank.
    Run(RecipeArgs),
}

#[derive(Debug, Args)]
struct RecipeArgs {
    #[arg(long)]
    example: Option<String>,
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    index: Option<PathBuf>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    multiplier: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum MetricsCmd {
    /// Attribution labels across thresholds, optionally against human labels.
    SweepThreshold(SweepArgs),
    /// MSE and flip rates between predicted and human ratings.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_name = "PATH")]
    archive: Option<PathBuf>,
    /// JSONL {"example_id","prompt_label","label"[,"model","temperature"]}.
    #[arg(long, value_name = "PATH")]
    human: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 1.0)]
    to: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// JSONL {"id","score","label"}.
    #[arg(long, value_name = "PATH")]
    predicted: PathBuf,
    /// JSONL {"id","score","label"}.
    #[arg(long, value_name = "PATH")]
    human: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Grid archive; repeat to combine runs.
    #[arg(long = "archive", value_name = "PATH")]
    archives: Vec<PathBuf>,
    /// Output directory for plot.svg and plot.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated iso-F1 levels.
    #[arg(long)]
    iso: Option<String>,
    /// Output of `retrieve simulate`; repeatable.
    #[arg(long = "overlay", value_name = "PATH")]
    overlays: Vec<PathBuf>,
    /// Output of `grid rerank`; repeatable.
    #[arg(long = "rerank", value_name = "PATH")]
    reranks: Vec<PathBuf>,
}

/// Map an error to its exit code: backend failures anywhere in the chain
/// give 2, everything else is a user error.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<GatewayError>().is_some() {
            return EXIT_BACKEND;
        }
        if let Some(GridError::Gateway(_)) = cause.downcast_ref::<GridError>() {
            return EXIT_BACKEND;
        }
    }
    EXIT_USER
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    // a second init (repeated in-process dispatch) is harmless
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parse `args` (without the program name) and run the command.
pub fn dispatch<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let argv = std::iter::once(OsString::from("attrib")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USER,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code(&err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_from_error_chain() {
        let backend = anyhow::Error::new(GridError::Gateway(GatewayError::Timeout("x".into())));
        assert_eq!(exit_code(&backend), EXIT_BACKEND);
        let wrapped = anyhow::Error::new(GatewayError::Transport("down".into())).context("grid run");
        assert_eq!(exit_code(&wrapped), EXIT_BACKEND);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), EXIT_USER);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

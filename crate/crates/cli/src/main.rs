mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use volret::corpus::Task;
use volret::experiments::Mode;
use volret::retrieval::Method;

/// Worker-count cap for the thread pool.
const THREADS_ENV: &str = "VOLRET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "volret", version, about = "Volume retrieval over slice embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an embeddings file and its metadata and print per-task counts.
    Ingest(IngestArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Build a slice index over a corpus or over the database of a plan.
    BuildIndex(BuildIndexArgs),
    /// Sample, retrieve, re-rank and evaluate a full sweep.
    Run(RunArgs),
    /// Re-rank stored candidate lists with C-MIR or fuse them with RRF.
    Rerank(RerankArgs),
    /// Score stored ranked lists against the plans that produced them.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// VEMB embeddings file.
    #[arg(long)]
    embeddings: PathBuf,
    /// JSON-lines metadata; defaults to `<stem>.meta.jsonl` beside the embeddings.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON generator spec; built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Use the four-task dataset proportions divided by this factor.
    #[arg(long, conflicts_with = "spec")]
    scale: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output embeddings file.
    #[arg(long)]
    out: PathBuf,
    /// Output metadata; defaults to `<stem>.meta.jsonl` beside the output.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    ef_construction: Option<usize>,
    #[arg(long)]
    ef_search: Option<usize>,
    /// Exhaustive search instead of HNSW.
    #[arg(long)]
    exact: bool,
    /// Seed for HNSW level draws.
    #[arg(long)]
    index_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    index: IndexArgs,
    /// Index only the database volumes of this plan, filtered as its mode requires.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Index only slices showing this organ (ignored with --plan).
    #[arg(long, conflicts_with = "plan")]
    organ: Option<Task>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    #[arg(long, value_delimiter = ',')]
    organs: Option<Vec<Task>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    slices_per_query: Option<usize>,
    #[arg(long)]
    top_m: Option<usize>,
    #[command(flatten)]
    index: IndexArgs,
    /// Evaluate these published plans instead of sampling new ones.
    #[arg(long = "plan")]
    plans: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Ranked-list CSV holding the candidate lists.
    #[arg(long)]
    candidates: PathBuf,
    /// `cmir` or `rrf`.
    #[arg(long, default_value = "cmir")]
    method: Method,
    /// Candidate list re-ordered by C-MIR.
    #[arg(long, default_value = "count_base")]
    source: Method,
    #[arg(long, default_value_t = volret::rerank::DEFAULT_RRF_K)]
    rrf_k: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Plan file; repeat together with --ranked.
    #[arg(long = "plan", required = true)]
    plans: Vec<PathBuf>,
    /// Ranked-list CSV of the plan at the same position.
    #[arg(long = "ranked", required = true)]
    ranked: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    output_dir: PathBuf,
}

fn init_threads() -> volret::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| volret::Error::Input(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| volret::Error::Input(format!("cannot configure worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synth(a) => commands::synth(a),
        Command::BuildIndex(a) => commands::build_index(a),
        Command::Run(a) => commands::run(a),
        Command::Rerank(a) => commands::rerank(a),
        Command::Evaluate(a) => commands::evaluate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kedial::genpipe::GenError;
use kedial::gquery::GraphQueryError;
use kedial::kb::KbError;
use kedial::ke::KeError;
use kedial::memlm::MemLmError;
use kedial::score::{Metric, ScoreError};
use kedial::tquery::QueryError;

use crate::io::Invalid;

/// Knowledge-embedded dialogue toolkit.
#[derive(Parser, Debug)]
#[command(name = "kedial", version, about)]
struct Cli {
    /// Seed for synthesis and template sampling.
    #[arg(long, global = true, env = "KEDIAL_SEED", default_value_t = 13)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log level for stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract templates from dialogues.
    Delex(DelexArgs),
    /// Generate KE dialogues from templates and a KB.
    Generate(GenerateArgs),
    /// Run a table or graph query.
    Query(QueryArgs),
    /// Score predicted dialogues against gold dialogues.
    Score(ScoreArgs),
    /// Train or evaluate the memorizing response generator.
    Memlm {
        #[command(subcommand)]
        command: MemlmCommand,
    },
    /// Write a synthetic KB and dialogue corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct DelexArgs {
    /// Dialogues, one JSON object per line.
    #[arg(long, required_unless_present = "camrest")]
    dialogues: Option<PathBuf>,
    /// Table KB (.json/.csv) or graph KB (.tsv).
    #[arg(long, required_unless_present = "camrest")]
    kb: Option<PathBuf>,
    /// JSON map from dialogue id to goal query (table KBs only).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Directory holding CamRest676.json and CamRestDB.json; uses the
    /// training split.
    #[arg(long, conflicts_with_all = ["dialogues", "kb", "queries"])]
    camrest: Option<PathBuf>,
    /// Fail instead of skipping dialogues that cannot be delexicalized.
    #[arg(long)]
    strict: bool,
    /// Minimum node-name length for the graph lexicon.
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    /// Template output (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Batch,
    PerKb,
    Graph,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    templates: PathBuf,
    #[arg(long, value_enum, default_value = "batch")]
    mode: Mode,
    /// Table KB (batch) or graph KB (graph mode).
    #[arg(long, required_unless_present_any = ["kbs", "camrest"])]
    kb: Option<PathBuf>,
    /// Directory of per-sample table KBs; the file stem is the sample id.
    #[arg(long)]
    kbs: Option<PathBuf>,
    /// Directory holding CamRestDB.json, used as the table KB.
    #[arg(long, conflicts_with = "kb")]
    camrest: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 200)]
    per_iteration: usize,
    /// Use at most this many query results per template.
    #[arg(long)]
    result_cap: Option<usize>,
    /// Z-history CSV (graph mode); defaults to the output path with a
    /// `.zhistory.csv` extension.
    #[arg(long)]
    z_history: Option<PathBuf>,
    /// Corpus output (JSON lines with provenance).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long, requires = "kb", conflicts_with = "cypher")]
    sql: Option<String>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, requires = "graph", required_unless_present = "sql")]
    cypher: Option<String>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Maximum number of graph bindings.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Table KB (.json/.csv) or graph KB (.tsv) for the entity lexicon.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// JSON map from dialogue id to goal query (inform/success).
    #[arg(long)]
    goals: Option<PathBuf>,
    /// Training dialogues; their entities are in-vocabulary for 2-hop OOV precision.
    #[arg(long)]
    train: Option<PathBuf>,
    /// JSON map from dialogue id to domain for a per-domain breakdown.
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long, default_value = "name")]
    name_attribute: String,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, value_delimiter = ',', default_value = "bleu,babi")]
    metrics: Vec<Metric>,
}

#[derive(Subcommand, Debug)]
enum MemlmCommand {
    Train(TrainArgs),
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dialogues; may be repeated.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = kedial::memlm::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Write the predicted dialogues here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Synthesize a movie graph instead of a restaurant table.
    #[arg(long)]
    graph: bool,
    #[arg(long, default_value_t = 40)]
    rows: usize,
    #[arg(long, default_value_t = 6)]
    attributes: usize,
    #[arg(long, default_value_t = 20)]
    templates: usize,
    #[arg(long, default_value_t = 0.5)]
    oov_fraction: f64,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 60)]
    dialogues: usize,
}

/// Some(true) for errors caused by bad input, Some(false) for
/// environment failures, None if the type is not ours.
fn classify(cause: &(dyn std::error::Error + 'static)) -> Option<bool> {
    if cause.is::<Invalid>()
        || cause.is::<serde_json::Error>()
        || cause.is::<QueryError>()
        || cause.is::<GraphQueryError>()
        || cause.is::<ScoreError>()
    {
        return Some(true);
    }
    if let Some(e) = cause.downcast_ref::<KbError>() {
        return Some(e.is_validation());
    }
    if let Some(e) = cause.downcast_ref::<KeError>() {
        return Some(e.is_validation());
    }
    if let Some(e) = cause.downcast_ref::<GenError>() {
        return Some(e.is_validation());
    }
    cause
        .downcast_ref::<MemLmError>()
        .map(|e| !matches!(e, MemLmError::Io(_)))
}

/// 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(classify) {
        Some(true) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Delex(a) => commands::delex(&a),
        Command::Generate(a) => commands::generate(&a, cli.seed),
        Command::Query(a) => commands::query(&a),
        Command::Score(a) => commands::score(&a),
        Command::Memlm {
            command: MemlmCommand::Train(a),
        } => commands::memlm_train(&a),
        Command::Memlm {
            command: MemlmCommand::Eval(a),
        } => commands::memlm_eval(&a),
        Command::Synth(a) => commands::synth(&a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

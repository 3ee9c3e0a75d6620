use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "graphusion",
    version,
    about = "Zero-shot knowledge graph construction and evaluation"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `graphusion=debug`; overrides `logging.level`.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the pipeline inputs set in the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct InputArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `jsonl` or `plain-text-dir`.
    #[arg(long)]
    pub format: Option<String>,
    /// One seed concept per line; when absent, seeds are generated.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    #[arg(long)]
    pub expert_kg: Option<PathBuf>,
    /// Scripted transcript (JSONL); selects the scripted backend.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and report document, chunk and vocabulary counts.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        /// Skip malformed JSONL records instead of aborting.
        #[arg(long)]
        skip_malformed: bool,
    },
    /// Generate seed concepts from the corpus.
    Seeds {
        #[command(flatten)]
        input: InputArgs,
        /// Output file; defaults to `<out_dir>/seeds.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract candidate triplets per seed into the zero-shot graph.
    Extract {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Fuse a zero-shot graph per seed and resolve conflicts.
    Fuse {
        #[command(flatten)]
        input: InputArgs,
        /// Zero-shot graph from `extract`; defaults to `<out_dir>/zskg.jsonl`.
        #[arg(long)]
        zskg: Option<PathBuf>,
    },
    /// Run seeds, extraction and fusion end to end.
    Build {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Pairwise prerequisite prediction over a labelled TSV.
    Linkpred(LinkpredArgs),
    /// Answer and score a TutorQA task.
    Qa(QaArgs),
    /// Summarize expert ratings and inter-rater agreement.
    EvalRatings {
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Knowledge graph utilities.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
}

#[derive(Subcommand)]
enum KgCommand {
    /// Triplet and concept counts, conflicts and the relation distribution.
    Inspect {
        kg: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Plain,
    Cot,
}

#[derive(Args)]
pub struct LinkpredArgs {
    /// TSV of `concept_a`, `concept_b`, `0|1`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "none")]
    pub variant: String,
    #[arg(long, value_enum, default_value = "plain")]
    pub mode: Mode,
    /// Score these predictions (one 0/1 per line) instead of querying a backend.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Training graph for the `con` variant.
    #[arg(long)]
    pub train_kg: Option<PathBuf>,
    /// `{"concept", "text"}` JSONL for the `wiki` variant.
    #[arg(long)]
    pub wiki: Option<PathBuf>,
    /// Also write the metric report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Args)]
pub struct QaArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Knowledge graph to query; defaults to `paths.kg`, else an empty graph.
    #[arg(long)]
    pub kg: Option<PathBuf>,
    /// Answers file; required output for task 6, optional otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match config::RunConfig::load_or_default(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let level = cli
        .log_level
        .clone()
        .unwrap_or_else(|| config.logging.level.clone());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Ingest {
            input,
            skip_malformed,
        } => commands::ingest(config, &input, skip_malformed),
        Command::Seeds { input, out } => commands::seeds(config, &input, out),
        Command::Extract { input } => commands::extract(config, &input),
        Command::Fuse { input, zskg } => commands::fuse(config, &input, zskg),
        Command::Build { input } => commands::build(config, &input),
        Command::Linkpred(args) => commands::linkpred(config, &args),
        Command::Qa(args) => commands::qa(config, &args),
        Command::EvalRatings { ratings } => commands::eval_ratings(&ratings),
        Command::Kg {
            command: KgCommand::Inspect { kg, json },
        } => commands::inspect(&kg, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

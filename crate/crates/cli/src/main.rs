//! `claim-anchor` command line.
//!
//! Exit codes: 0 success, 1 usage or validation error (bad config, unreadable
//! or malformed inputs), 2 failure while the pipeline runs.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use claim_anchor::experiment::ScorerKind;
use claim_anchor::{AugmentMode, TableFormat};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "claim-anchor",
    version,
    about = "Retrieve, rerank and evaluate claim-to-paper rankings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a BM25 index snapshot from a corpus
    Index(IndexArgs),
    /// Retrieve candidates for every query and write a run file
    Retrieve(RetrieveArgs),
    /// Rerank an existing retrieval run
    Rerank(RerankArgs),
    /// Compute MRR@k of a run or prediction file
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a config file
    Experiment(ExperimentArgs),
    /// Write queries with augmentation applied
    Augment(AugmentArgs),
}

/// Inputs shared by most subcommands. Each flag overrides the matching
/// config field.
#[derive(Debug, Clone, Default, Args)]
struct InputArgs {
    /// Experiment config (.toml or .json)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Paper collection (CSV or TSV with cord_uid, title, abstract)
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "csv|tsv")]
    corpus_format: Option<TableFormat>,
    /// Queries (post_id, tweet_text and optionally cord_uid)
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, value_name = "csv|tsv")]
    queries_format: Option<TableFormat>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Stopword list, one word per line (default: bundled English list)
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    min_token_len: Option<usize>,
    /// Augmentation mode
    #[arg(long, value_name = "MODE")]
    augment: Option<AugmentMode>,
    /// Formal rewrite table (post_id<TAB>text)
    #[arg(long)]
    formal: Option<PathBuf>,
    /// English formal rewrite table
    #[arg(long)]
    english_formal: Option<PathBuf>,
    /// Keyword rewrite table
    #[arg(long)]
    keywords: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Snapshot path to write
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Use a saved BM25 snapshot instead of indexing the corpus
    #[arg(long)]
    index: Option<PathBuf>,
    /// Dense retrieval: document embeddings
    #[arg(long, requires = "query_embeddings")]
    doc_embeddings: Option<PathBuf>,
    /// Dense retrieval: query embeddings keyed by post_id
    #[arg(long, requires = "doc_embeddings")]
    query_embeddings: Option<PathBuf>,
    /// Candidates per query
    #[arg(long, short)]
    k: Option<usize>,
    /// Run file to write (default: standard output)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write a top-5 prediction file
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ScorerArgs {
    /// Reranking scorer
    #[arg(long, value_enum)]
    scorer: Option<ScorerChoice>,
    /// External scorer endpoint: `cmd:<program> [args..]` or `tcp:<host>:<port>`
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ScorerChoice {
    None,
    Identity,
    LexicalOverlap,
    External,
}

impl ScorerChoice {
    fn kind(self) -> Option<ScorerKind> {
        match self {
            ScorerChoice::None => None,
            ScorerChoice::Identity => Some(ScorerKind::Identity),
            ScorerChoice::LexicalOverlap => Some(ScorerKind::LexicalOverlap),
            ScorerChoice::External => Some(ScorerKind::External),
        }
    }
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Retrieval run or prediction file to rerank
    #[arg(long)]
    run: PathBuf,
    /// Run file to write (default: standard output)
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Run or prediction file
    #[arg(long)]
    run: PathBuf,
    /// Labeled queries (post_id, tweet_text, cord_uid)
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_name = "csv|tsv")]
    gold_format: Option<TableFormat>,
    #[arg(long, default_value_t = claim_anchor::eval::DEFAULT_EVAL_K)]
    k: usize,
    /// Also print the reciprocal rank of every query
    #[arg(long)]
    per_query: bool,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    retrieval_k: Option<usize>,
    #[arg(long)]
    eval_k: Option<usize>,
    /// Run once per mode (comma separated, or `all`) and print a summary table
    #[arg(long, value_delimiter = ',', conflicts_with = "augment")]
    modes: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Query file to write (default: standard output)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Index(a) => commands::index(a),
        Command::Retrieve(a) => commands::retrieve(a),
        Command::Rerank(a) => commands::rerank(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Augment(a) => commands::augment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

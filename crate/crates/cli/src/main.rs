use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

/// Train sentence-pair inference models and check privacy policies against
/// regulation clauses.
#[derive(Parser, Debug)]
#[command(name = "nlicheck", version, about)]
pub struct Cli {
    /// Seed for shuffling, dropout and initialisation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with defaults for seed, data_dir and [train]/[model]/[fetch]
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Only print errors on standard error
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Human-readable text instead of line-delimited JSON
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a vocabulary from a training split
    BuildVocab(BuildVocabArgs),
    /// Train a model and write the best checkpoint
    Train(TrainArgs),
    /// Accuracy, loss and confusion counts of a checkpoint on a split
    Evaluate(EvaluateArgs),
    /// Classify one premise/hypothesis pair
    Predict(PredictArgs),
    /// Fetch policy pages from a manifest into a corpus directory
    Ingest(IngestArgs),
    /// List corpus sentences matching clause keyword patterns
    Search(SearchArgs),
    /// Pair clauses with matching policy sentences and write a report
    Check(CheckArgs),
    /// Validate and re-render a JSONL report
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetArg {
    Snli,
    Mnli,
    #[value(name = "mnli-government", alias = "mnli_government")]
    MnliGovernment,
    /// built-in synthetic corpus, no download needed
    Toy,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Corpus to read
    #[arg(long, value_enum, default_value = "snli")]
    dataset: DatasetArg,
    /// Directory holding the corpus JSONL files [env: NLICHECK_DATA_DIR]
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Use only the first N training examples
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output TSV (`<token>\t<id>` per line)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Architecture (defaults: 1 for snli and toy, 2 for mnli)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    design: Option<u8>,
    /// Pretrained vectors, one `<token> <f1> ... <f300>` per line
    #[arg(long, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    /// Reuse an existing vocabulary instead of building one
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Tokens kept per sentence
    #[arg(long)]
    max_len: Option<usize>,
    /// Checkpoint path; the vocabulary is written next to it
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Per-epoch metrics as JSONL
    #[arg(long, value_name = "PATH")]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "dev")]
    split: SplitArg,
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    premise: String,
    #[arg(long)]
    hypothesis: String,
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct FetchArgs {
    /// Parallel fetches across hosts
    #[arg(long)]
    jobs: Option<usize>,
    /// Per-request timeout in seconds
    #[arg(long)]
    timeout: Option<u64>,
    /// Pause between requests to one host, in milliseconds
    #[arg(long)]
    delay_ms: Option<u64>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// JSON array of {"app_id", "policy_url"}
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Corpus directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Record keyword matches for these clauses
    #[arg(long, value_name = "PATH")]
    clauses: Option<PathBuf>,
    #[command(flatten)]
    fetch: FetchArgs,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Clause file (defaults to the bundled GDPR clauses)
    #[arg(long, value_name = "PATH")]
    clauses: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Fetch policies from this manifest (into --corpus when given)
    #[arg(long, value_name = "PATH", required_unless_present = "corpus")]
    manifest: Option<PathBuf>,
    /// Existing corpus directory
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Clause file (defaults to the bundled GDPR clauses)
    #[arg(long, value_name = "PATH")]
    clauses: Option<PathBuf>,
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Minimum contradiction probability for a potential violation
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Write the report here instead of standard output
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    fetch: FetchArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSONL report written by `check`
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(commands::Failure::Operational(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

//! `qboard`: classify and answer course discussion-board questions, aggregate
//! annotator labels, and run the evaluation experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 corpus error, 3 backend
//! failure after retries. Stdout carries only data and tables; diagnostics go
//! to stderr.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{CliConfig, CliError};

#[derive(Parser)]
#[command(name = "qboard", version, about = "Discussion-board question triage and evaluation")]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// JSON configuration file; flags and env vars take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Backend mode: live, replay or record
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Fixture file for replay/record backends
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    /// Prompt-pack directory (task_description.txt, examples.jsonl, schemes.json)
    #[arg(long = "prompt-pack", global = true)]
    prompt_pack: Option<PathBuf>,
    /// Output directory for generated files
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the first constructed prompt and exit without backend calls
    #[arg(long, global = true)]
    dry_run: bool,
    /// Ignore unknown keys in corpus files
    #[arg(long, global = true)]
    lenient: bool,
    /// Completion model id for live backends
    #[arg(long, global = true)]
    model: Option<String>,
    /// Embedding model id for live backends
    #[arg(long = "embed-model", global = true)]
    embed_model: Option<String>,
    /// API base URL (overrides QBOARD_API_BASE)
    #[arg(long = "api-base", global = true)]
    api_base: Option<String>,
    /// Maximum concurrent backend calls
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate annotator labels into majority-vote ground truth
    Aggregate {
        /// JSONL corpus file
        corpus: PathBuf,
    },
    /// Classify every resolved question and score against ground truth
    Classify {
        /// JSONL corpus file
        corpus: PathBuf,
        /// Label scheme name (default: canonical)
        #[arg(long)]
        scheme: Option<String>,
        /// Few-shot example count (default: the whole pool)
        #[arg(long)]
        examples: Option<usize>,
    },
    /// Classify, route, and answer every question in the corpus
    Answer {
        /// JSONL corpus file
        corpus: PathBuf,
        /// Directory of course documents for contextual answering
        #[arg(long = "context-dir")]
        context_dir: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON spec
    Experiment {
        /// Experiment spec file
        spec: Option<PathBuf>,
        /// List the supported experiment axes and exit
        #[arg(long = "list-axes")]
        list_axes: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = CliConfig::resolve(&cli.globals)?;
    match cli.command {
        Command::Aggregate { corpus } => commands::aggregate(&config, &corpus),
        Command::Classify {
            corpus,
            scheme,
            examples,
        } => commands::classify(&config, &corpus, scheme.as_deref(), examples),
        Command::Answer { corpus, context_dir } => {
            commands::answer(&config, &corpus, context_dir.as_deref())
        }
        Command::Experiment { spec, list_axes } => {
            if list_axes {
                return commands::list_axes();
            }
            let spec = spec.ok_or_else(|| {
                CliError::Config("experiment requires a spec file (or --list-axes)".into())
            })?;
            commands::experiment(&config, &cli.globals, &spec)
        }
    }
}

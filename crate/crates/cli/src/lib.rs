//! Command-line front end for building, querying and evaluating
//! signifier/signified knowledge graphs.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Kind, Target};
use crate::config::{ModeName, Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "semiokg", version, about)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    output_dir: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    force_refetch: bool,
    #[arg(long, global = true, value_name = "N")]
    min_weight: Option<u64>,
    /// Cosine threshold for semantic matching.
    #[arg(long, global = true, value_name = "X")]
    threshold: Option<f64>,
    /// Minimum detection score for end-to-end evaluation.
    #[arg(long, global = true, value_name = "X")]
    confidence: Option<f64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Download the url list into the cache and extract page text.
    FetchCorpus,
    /// Split fetched pages into train and test by artwork references.
    SplitCorpus,
    /// Build and prune the graph from SRL frames and NER annotations.
    BuildGraph,
    /// List the meanings of a term, heaviest first.
    Query {
        term: String,
        /// Graph file; defaults to the configured one.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Score graph meanings against object-keyed gold pairings.
    EvalKg {
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
    },
    /// Score detected objects' meanings against image-keyed gold pairings.
    EvalE2e {
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
    },
    /// Check a file against its schema.
    Validate {
        #[arg(long, value_enum)]
        kind: Kind,
        file: PathBuf,
    },
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    let overrides = Overrides {
        output_dir: cli.output_dir,
        force_refetch: cli.force_refetch,
        min_weight: cli.min_weight,
        threshold: cli.threshold,
        confidence: cli.confidence,
    };
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    if cli.print_config {
        print!("{}", toml::to_string(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let json = cli.json;
    match cli.command {
        None => anyhow::bail!("no subcommand given; see --help"),
        Some(Command::FetchCorpus) => commands::fetch_corpus(&config, json),
        Some(Command::SplitCorpus) => commands::split(&config, json),
        Some(Command::BuildGraph) => commands::build_graph(&config, json),
        Some(Command::Query { term, graph }) => commands::query(&config, graph.as_deref(), &term, json),
        Some(Command::EvalKg { mode }) => commands::eval(&config, Target::Kg, mode, json),
        Some(Command::EvalE2e { mode }) => commands::eval(&config, Target::E2e, mode, json),
        Some(Command::Validate { kind, file }) => commands::validate(kind, &file, json),
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit 1, like input errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

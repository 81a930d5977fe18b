//! Pipeline driver: mines definition pairs from wiki revision histories,
//! labels them by multi-annotator consensus, grows a classifier by
//! self-training, and scores the result, all from one config file and seed.
//!
//! Exit codes: 0 success, 1 pipeline error, 2 unusable configuration.

mod commands;
mod config;
mod logging;
mod manifest;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::Overrides;
use workspace::Workspace;

#[derive(Parser)]
#[command(name = "wikitide", version, about = "definition-change mining and self-training pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, value_name = "PATH", default_value = "pipeline.toml")]
    config: PathBuf,
    /// Override the configured random seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Override the configured workspace directory.
    #[arg(long, global = true, value_name = "DIR")]
    workspace: Option<PathBuf>,
    /// Truncate step inputs to N records for desk-scale runs.
    #[arg(long, global = true, value_name = "N")]
    limit: Option<usize>,
    /// Classifier for bootstrap and wictsv: reference, reference-warm, or
    /// external:<command line>.
    #[arg(long, global = true, value_name = "NAME")]
    classifier: Option<String>,
    /// Fail on a partial harvest instead of keeping what was collected.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw definition pairs from the configured revision source.
    Harvest,
    /// Label harvested pairs by multi-annotator consensus.
    Annotate,
    /// Partition labeled pairs into training and held-out sets.
    Split,
    /// Grow the training set by iterative self-training.
    Bootstrap,
    /// Summarize held-out metrics and pick the best sweep.
    Report,
    /// Export the semantic drift series of promoted pairs.
    Drift,
    /// Run binary target-sense verification with the trained model.
    Wictsv,
    /// Download the published target-sense-verification data files.
    Fetch,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Harvest => "harvest",
            Command::Annotate => "annotate",
            Command::Split => "split",
            Command::Bootstrap => "bootstrap",
            Command::Report => "report",
            Command::Drift => "drift",
            Command::Wictsv => "wictsv",
            Command::Fetch => "fetch",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        workspace: cli.workspace.clone(),
        limit: cli.limit,
        classifier: cli.classifier.clone(),
        strict: cli.strict,
    };
    let settings = match config::load(&cli.config, &overrides, cli.command.name()) {
        Ok(settings) => settings,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(2);
        }
    };
    let workspace = match Workspace::open(&settings.workspace) {
        Ok(workspace) => workspace,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(1);
        }
    };
    let ctx = Context {
        settings,
        workspace,
    };
    let result = match cli.command {
        Command::Harvest => commands::harvest::run(&ctx),
        Command::Annotate => commands::annotate::run(&ctx),
        Command::Split => commands::split::run(&ctx),
        Command::Bootstrap => commands::bootstrap::run(&ctx),
        Command::Report => commands::report::run(&ctx),
        Command::Drift => commands::drift::run(&ctx),
        Command::Wictsv => commands::wictsv::run(&ctx),
        Command::Fetch => commands::fetch::run(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

//! `fairtest`: neuron selection, coverage, generation, enhancement and the
//! mutant sweep as reproducible batch commands.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::Out;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fairtest", version, about = "Individual-fairness test adequacy for dense classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "fairtest-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the synthetic benchmark: model, datasets, pairs and a config.
    Synth(Common),
    /// Kruskal-Wallis neuron selection on the training pairs.
    SelectNeurons(Common),
    /// Coverage of one or more pair suites.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// `name=path[+path...]` or a bare path; repeatable.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Unfair pair generation seeded from the fair test pairs.
    Generate(Common),
    /// Selection-guided augmentation and retraining.
    Enhance(Common),
    /// Mutant sweep and coverage/fairness correlations.
    Mutate(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::SelectNeurons(_) => "select-neurons",
            Command::Coverage { .. } => "coverage",
            Command::Generate(_) => "generate",
            Command::Enhance(_) => "enhance",
            Command::Mutate(_) => "mutate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth(c)
            | Command::SelectNeurons(c)
            | Command::Generate(c)
            | Command::Enhance(c)
            | Command::Mutate(c) => c,
            Command::Coverage { common, .. } => common,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FAIRTEST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::new("configuration", format!("FAIRTEST_THREADS={raw:?} is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(command: &Command, out: &Path) -> Result<(), CliError> {
    configure_threads()?;
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(command, Command::Synth(_)) => RunConfig::default(),
        None => return Err(CliError::new("configuration", "--config is required")),
    };
    cfg.apply_seed(common.seed);

    let mut files = Out::new(out);
    let summary = match command {
        Command::Synth(_) => commands::synth(&cfg, &mut files)?,
        Command::SelectNeurons(_) => commands::select_neurons(&cfg, &mut files)?,
        Command::Coverage { suites, .. } => commands::coverage(&cfg, suites, &mut files)?,
        Command::Generate(_) => commands::generate(&cfg, &mut files)?,
        Command::Enhance(_) => commands::enhance(&cfg, &mut files)?,
        Command::Mutate(_) => commands::mutate(&cfg, &mut files)?,
    };
    files.manifest(command.name(), &cfg, summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.command.common().out.clone();
    let error_path = out.join("error.json");
    let result = std::fs::create_dir_all(&out)
        .map_err(CliError::from)
        .and_then(|_| match std::fs::remove_file(&error_path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        })
        .and_then(|_| run(&cli.command, &out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairtest {} ({}): {e}", cli.command.name(), e.kind);
            let record = json!({
                "command": cli.command.name(),
                "kind": e.kind,
                "message": e.message,
            });
            if let Ok(text) = serde_json::to_string_pretty(&record) {
                let _ = std::fs::write(&error_path, text + "\n");
            }
            ExitCode::FAILURE
        }
    }
}

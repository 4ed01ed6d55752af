mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

/// Natural adversarial attacks, augmentation and robustness evaluation for
/// NER corpora in CoNLL column format.
#[derive(Debug, Parser)]
#[command(name = "nerstress", version, about)]
struct Cli {
    /// Seed for every randomized step; generated and recorded when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Serve knowledge-base lookups from the response cache only.
    #[arg(long, global = true)]
    offline: bool,
    /// Use the in-process stub masked LM: a lexicon file, or "builtin".
    #[arg(long, global = true, value_name = "PATH|builtin")]
    stub_provider: Option<String>,
    /// Worker threads for per-sentence work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML or JSON config file; a run manifest is accepted too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an adversarial entity dictionary from a gold corpus.
    BuildDict(commands::build_dict::Args),
    /// Attack a corpus at the entity level, the context level, or both.
    Attack(commands::attack::Args),
    /// Apply a training-data augmentation transform.
    Augment(commands::augment::Args),
    /// Score predictions against gold and analyse the errors.
    Evaluate(commands::evaluate::Args),
    /// Entity-vocabulary and attack statistics.
    Stats(commands::stats::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size the worker pool: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = Settings {
        seed: cli.seed,
        offline: cli.offline.then_some(true),
        stub_provider: cli.stub_provider.clone(),
        ..Settings::default()
    };
    let base = Settings::defaults().layer(file).layer(flags);
    let seed_from_flag = cli.seed.is_some();
    match cli.command {
        Command::BuildDict(args) => commands::build_dict::run(args, base, seed_from_flag),
        Command::Attack(args) => commands::attack::run(args, base, seed_from_flag),
        Command::Augment(args) => commands::augment::run(args, base, seed_from_flag),
        Command::Evaluate(args) => commands::evaluate::run(args, base),
        Command::Stats(args) => commands::stats::run(args, base),
    }
}

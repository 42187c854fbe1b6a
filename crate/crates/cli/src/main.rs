//! `histoprog` command-line interface.

mod extract;
mod index;
mod output;
mod personalize;
mod survival;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

/// What a successful command reports back to the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Some inputs were skipped and listed in a manifest.
    Partial,
}

#[derive(Parser)]
#[command(name = "histoprog", about = "Histology similar-cohort retrieval and personalized survival analysis")]
struct Cli {
    /// Worker threads for extraction, index scans and CV folds.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute 31-feature patch vectors from patches and nucleus masks.
    Extract(extract::ExtractArgs),
    /// Estimate a stain reference from an exemplar patch.
    StainRef(extract::StainRefArgs),
    /// Build or query a similarity index.
    #[command(subcommand)]
    Index(index::IndexCommand),
    /// Kaplan-Meier, log-rank, Cox and factor screening on a records table.
    #[command(subcommand)]
    Survival(survival::SurvivalCommand),
    /// Cross-check features, lineage and records of a bundle.
    Validate(survival::ValidateArgs),
    /// Personalized factor weights and risk report for one patient.
    Personalize(personalize::PersonalizeArgs),
    /// Write a synthetic cohort bundle.
    Simulate(personalize::SimulateArgs),
}

fn version() -> String {
    format!(
        "{} (index format {})",
        env!("CARGO_PKG_VERSION"),
        histoprog::index::INDEX_FORMAT_VERSION
    )
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Extract(args) => extract::run(args),
        Command::StainRef(args) => extract::run_stain_ref(args),
        Command::Index(cmd) => index::run(cmd),
        Command::Survival(cmd) => survival::run(cmd),
        Command::Validate(args) => survival::run_validate(args),
        Command::Personalize(args) => personalize::run(args),
        Command::Simulate(args) => personalize::run_simulate(args),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().version(version()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

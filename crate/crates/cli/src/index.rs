use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand};
use histoprog::index::{feedback_search_normalized, FeedbackOptions, IndexError, SimilarityIndex};
use histoprog::ingest::{load_embeddings, load_features};

use crate::output::emit;
use crate::Outcome;

#[derive(Subcommand)]
pub enum IndexCommand {
    /// Build a PGIX index from a feature or embedding table.
    Build(BuildArgs),
    /// Nearest stored patches to a stored patch.
    Query(QueryArgs),
    /// Nearest stored patches after relevance feedback.
    Feedback(FeedbackArgs),
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long)]
    features: PathBuf,
    /// Accept any number of value columns.
    #[arg(long)]
    embeddings: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    patch_id: String,
    #[arg(long, default_value_t = 500)]
    k: usize,
    /// Ranked list CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FeedbackArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 50)]
    m_positives: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

fn open(args: &QueryArgs) -> anyhow::Result<(SimilarityIndex, usize)> {
    let index = SimilarityIndex::load(&args.index).with_context(|| format!("loading {}", args.index.display()))?;
    let pos = index
        .position(&args.patch_id)
        .ok_or_else(|| IndexError::UnknownId(args.patch_id.clone()))?;
    Ok((index, pos))
}

pub fn run(cmd: IndexCommand) -> anyhow::Result<Outcome> {
    match cmd {
        IndexCommand::Build(args) => {
            let vectors = if args.embeddings {
                load_embeddings(&args.features)?.1
            } else {
                load_features(&args.features)?
            };
            let index = SimilarityIndex::build(&vectors)?;
            index
                .save(&args.out)
                .with_context(|| format!("writing {}", args.out.display()))?;
            log::info!("indexed {} vectors of dimension {}", index.len(), index.dim());
        }
        IndexCommand::Query(args) => {
            let (index, pos) = open(&args)?;
            let ranked = index.query_normalized(index.row(pos), args.k, index.weights())?;
            emit(args.out.as_deref(), ranked.to_csv().as_bytes())?;
        }
        IndexCommand::Feedback(args) => {
            let (index, pos) = open(&args.query)?;
            let options = FeedbackOptions {
                m_positives: args.m_positives,
                max_rounds: args.rounds,
                tol: args.tol,
                epsilon: args.epsilon,
            };
            let (ranked, state) = feedback_search_normalized(&index, index.row(pos), args.query.k, &options)?;
            log::info!(
                "feedback: {} rounds, {} positives, converged: {}",
                state.round,
                state.positive_set.len(),
                state.converged
            );
            emit(args.query.out.as_deref(), ranked.to_csv().as_bytes())?;
        }
    }
    Ok(Outcome::Done)
}

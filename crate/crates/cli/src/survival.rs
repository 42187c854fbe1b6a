use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Subcommand, ValueEnum};
use histoprog::config::LambdaChoice;
use histoprog::ingest::{load_features, load_lineage, load_records, validate_bundle, FactorSchema};
use histoprog::survival::{
    cox_fit, cross_validate_lambda, hazard_ratios, km_estimate, lambda_grid, logrank_test, median_split,
    univariate_screen, CoxOptions, HazardRatio, SurvivalDataset, CV_FOLDS,
};
use serde::Serialize;

use crate::output::emit;
use crate::Outcome;

#[derive(Subcommand)]
pub enum SurvivalCommand {
    /// Kaplan-Meier curve as CSV.
    Km(KmArgs),
    /// Log-rank test between the halves of a median split.
    Logrank(LogrankArgs),
    /// Cox proportional hazards fit as JSON.
    Cox(CoxArgs),
    /// Median-split log-rank screen of every factor as CSV.
    Screen(ScreenArgs),
}

#[derive(Args)]
pub struct RecordsArgs {
    /// `patient_id,time_days,event,<factors>` table.
    #[arg(long)]
    records: PathBuf,
    /// Factor schema for label encoding; all factors numeric without it.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated factors to use; all by default.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Low,
    High,
}

#[derive(Args)]
pub struct KmArgs {
    #[command(flatten)]
    input: RecordsArgs,
    /// Restrict to one half of the median split of this factor.
    #[arg(long, requires = "group")]
    split: Option<String>,
    #[arg(long, value_enum)]
    group: Option<Side>,
}

#[derive(Args)]
pub struct LogrankArgs {
    #[command(flatten)]
    input: RecordsArgs,
    /// Factor whose median split defines the two groups.
    #[arg(long)]
    factor: String,
}

#[derive(Args)]
pub struct CoxArgs {
    #[command(flatten)]
    input: RecordsArgs,
    /// Lasso penalty, or `cv` for cross-validated selection.
    #[arg(long, default_value = "0")]
    lambda: LambdaChoice,
    /// Fold-assignment seed for `--lambda cv`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    input: RecordsArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    lineage: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_schema(path: Option<&std::path::Path>) -> anyhow::Result<Option<FactorSchema>> {
    path.map(|p| FactorSchema::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
}

fn load_dataset(args: &RecordsArgs) -> anyhow::Result<SurvivalDataset> {
    let schema = load_schema(args.schema.as_deref())?;
    let table = load_records(&args.records, schema.as_ref())?;
    for r in &table.rejects {
        log::warn!("rejected row {} ({}): {}", r.row, r.patient_id, r.reason);
    }
    let factors = args.factors.clone().unwrap_or_else(|| table.factor_names.clone());
    let selection = table.select(None, &factors)?;
    if !selection.incomplete.is_empty() {
        log::warn!(
            "dropped {} patients with missing values: {}",
            selection.incomplete.len(),
            selection.incomplete.join(", ")
        );
    }
    Ok(selection.dataset)
}

fn split_masks(ds: &SurvivalDataset, factor: &str) -> anyhow::Result<(Vec<bool>, Vec<bool>)> {
    let Some(j) = ds.column(factor) else {
        bail!("unknown factor `{factor}`");
    };
    let split = median_split(&ds.raw_column(j))?;
    Ok((split.low, split.high))
}

#[derive(Serialize)]
struct CvReport {
    seed: u64,
    folds: usize,
    lambdas: Vec<f64>,
    scores: Vec<f64>,
    best_lambda: f64,
}

#[derive(Serialize)]
struct CoxReport {
    n: usize,
    events: usize,
    lambda: f64,
    lambda_selection: Option<CvReport>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    separation: bool,
    se_from_refit: bool,
    coefficients: Vec<HazardRatio>,
}

pub fn run(cmd: SurvivalCommand) -> anyhow::Result<Outcome> {
    match cmd {
        SurvivalCommand::Km(args) => {
            let ds = load_dataset(&args.input)?;
            let subset = match (&args.split, args.group) {
                (Some(f), Some(side)) => {
                    let (low, high) = split_masks(&ds, f)?;
                    match side {
                        Side::Low => low,
                        Side::High => high,
                    }
                }
                _ => vec![true; ds.n()],
            };
            let curve = km_estimate(&ds, &subset)?;
            emit(args.input.out.as_deref(), curve.to_csv().as_bytes())?;
        }
        SurvivalCommand::Logrank(args) => {
            let ds = load_dataset(&args.input)?;
            let (low, high) = split_masks(&ds, &args.factor)?;
            let r = logrank_test(&ds, &low, &high)?;
            let csv = format!(
                "factor,chi2,p_value,observed_low,expected_low,variance\n{},{},{},{},{},{}\n",
                args.factor, r.chi2, r.p, r.observed_a, r.expected_a, r.variance
            );
            emit(args.input.out.as_deref(), csv.as_bytes())?;
        }
        SurvivalCommand::Cox(args) => {
            let ds = load_dataset(&args.input)?;
            let options = CoxOptions {
                max_iter: args.max_iter,
                tol: args.tol,
                ..CoxOptions::default()
            };
            let (lambda, selection) = match args.lambda {
                LambdaChoice::Fixed(l) => (l, None),
                LambdaChoice::CrossValidated => {
                    let cv = cross_validate_lambda(&ds, &lambda_grid(), args.seed, &options)?;
                    log::info!("cross-validation chose lambda {}", cv.best_lambda);
                    let report = CvReport {
                        seed: cv.seed,
                        folds: CV_FOLDS,
                        lambdas: cv.lambdas,
                        scores: cv.scores,
                        best_lambda: cv.best_lambda,
                    };
                    (cv.best_lambda, Some(report))
                }
            };
            let fit = cox_fit(&ds, lambda, &options)?;
            if fit.separation {
                log::warn!("coefficients diverge: the data are separable");
            } else if !fit.converged {
                log::warn!("fit did not converge in {} iterations", fit.iterations);
            }
            let coefficients = hazard_ratios(&fit).unwrap_or_else(|_| {
                fit.names
                    .iter()
                    .zip(&fit.beta)
                    .map(|(name, &beta)| HazardRatio {
                        name: name.clone(),
                        beta,
                        se: None,
                        hr: beta.exp(),
                        ci_low: None,
                        ci_high: None,
                        p: None,
                    })
                    .collect()
            });
            let report = CoxReport {
                n: ds.n(),
                events: ds.n_events(),
                lambda,
                lambda_selection: selection,
                loglik: fit.loglik,
                iterations: fit.iterations,
                converged: fit.converged,
                separation: fit.separation,
                se_from_refit: fit.se_from_refit,
                coefficients,
            };
            let mut bytes = serde_json::to_vec_pretty(&report)?;
            bytes.push(b'\n');
            emit(args.input.out.as_deref(), &bytes)?;
        }
        SurvivalCommand::Screen(args) => {
            let ds = load_dataset(&args.input)?;
            let rows = univariate_screen(&ds, args.alpha)?;
            let mut csv = String::from("factor,p_value,chi2,direction,median_cut,significant,skipped\n");
            for r in rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.factor_name, r.logrank_p, r.chi2, r.direction, r.median_cut, r.significant, r.skipped
                ));
            }
            emit(args.input.out.as_deref(), csv.as_bytes())?;
        }
    }
    Ok(Outcome::Done)
}

pub fn run_validate(args: ValidateArgs) -> anyhow::Result<Outcome> {
    let features = load_features(&args.features)?;
    let lineage = load_lineage(&args.lineage)?;
    let schema = load_schema(args.schema.as_deref())?;
    let records = load_records(&args.records, schema.as_ref())?;
    let report = validate_bundle(&features, &lineage, &records);
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    emit(args.out.as_deref(), &bytes)?;
    let findings = report.findings();
    if findings > 0 {
        log::warn!("{findings} lineage problems found");
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Done)
}

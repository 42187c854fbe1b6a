//! Penalty selection by cross-validated partial likelihood.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cox::{cox_fit_from, CoxOptions};
use super::{cox_loglik, Result, SurvivalDataset, SurvivalError};

pub const CV_FOLDS: usize = 5;
pub const CV_GRID_POINTS: usize = 30;
pub const CV_LAMBDA_MIN: f64 = 1e-4;
pub const CV_LAMBDA_MAX: f64 = 1.0;

/// `CV_GRID_POINTS` log-spaced penalties from `CV_LAMBDA_MIN` to `CV_LAMBDA_MAX`.
pub fn lambda_grid() -> Vec<f64> {
    let (lo, hi) = (CV_LAMBDA_MIN.ln(), CV_LAMBDA_MAX.ln());
    let last = (CV_GRID_POINTS - 1) as f64;
    (0..CV_GRID_POINTS)
        .map(|i| {
            if i == 0 {
                CV_LAMBDA_MIN
            } else if i == CV_GRID_POINTS - 1 {
                CV_LAMBDA_MAX
            } else {
                (lo + (hi - lo) * i as f64 / last).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Summed cross-validated partial log-likelihood per penalty.
    pub scores: Vec<f64>,
    pub best_lambda: f64,
    pub best_index: usize,
    pub seed: u64,
    /// Fold of each subject.
    pub folds: Vec<usize>,
}

/// Seeded shuffled assignment of `n` subjects to `k` folds.
fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        folds[i] = rank % k;
    }
    folds
}

/// Picks λ maximizing the cross-validated partial likelihood
/// `Σ_k [l(β₋ₖ) − l₋ₖ(β₋ₖ)]`, where `β₋ₖ` is fitted without fold `k`.
///
/// Each training fit is standardized on its own rows; its coefficients are
/// carried to the full data on the raw scale, where location shifts cancel
/// in the partial likelihood. Fits along the grid are warm-started from the
/// next larger penalty. Ties go to the larger penalty.
pub fn cross_validate_lambda(
    ds: &SurvivalDataset,
    lambdas: &[f64],
    seed: u64,
    options: &CoxOptions,
) -> Result<CvResult> {
    if ds.n() < 2 * CV_FOLDS {
        return Err(SurvivalError::TooFewSubjects {
            found: ds.n(),
            needed: 2 * CV_FOLDS,
        });
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(SurvivalError::InvalidPenalty(bad));
    }
    let folds = assign_folds(ds.n(), CV_FOLDS, seed);
    // Fit from the largest penalty down so warm starts follow the path.
    let mut by_size: Vec<usize> = (0..lambdas.len()).collect();
    by_size.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));

    let per_fold: Vec<Vec<f64>> = (0..CV_FOLDS)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let train_rows: Vec<usize> = (0..ds.n()).filter(|&i| folds[i] != k).collect();
            let train = ds.select_rows(&train_rows);
            let mut scores = vec![0.0; lambdas.len()];
            let mut warm: Option<Vec<f64>> = None;
            for &g in &by_size {
                let fit = cox_fit_from(&train, lambdas[g], options, warm.as_deref())?;
                let full_beta: Vec<f64> = fit
                    .unstandardized_beta()
                    .iter()
                    .zip(&ds.column_stats)
                    .map(|(b, (_, s))| b * s)
                    .collect();
                scores[g] = cox_loglik(ds, &full_beta)? - fit.loglik;
                warm = Some(fit.beta);
            }
            Ok(scores)
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = (0..lambdas.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum())
        .collect();
    let mut best_index = 0;
    for g in 1..lambdas.len() {
        let better = scores[g] > scores[best_index]
            || (scores[g] == scores[best_index] && lambdas[g] > lambdas[best_index]);
        if better {
            best_index = g;
        }
    }
    Ok(CvResult {
        lambdas: lambdas.to_vec(),
        scores,
        best_lambda: lambdas[best_index],
        best_index,
        seed,
        folds,
    })
}

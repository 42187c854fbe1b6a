//! Median-split log-rank screening of candidate prognostic factors.

use rayon::prelude::*;
use serde::Serialize;

use super::{cox_fit, logrank_test, CoxOptions, Result, SurvivalDataset, SurvivalError};

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub low: Vec<bool>,
    pub high: Vec<bool>,
    pub cut: f64,
}

/// Splits at the lower median: values `<= cut` are low, the rest high.
pub fn median_split(values: &[f64]) -> Result<MedianSplit> {
    if values.is_empty() {
        return Err(SurvivalError::EmptySubset);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(SurvivalError::InvalidData("NaN in split values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[(sorted.len() - 1) / 2];
    let low: Vec<bool> = values.iter().map(|&v| v <= cut).collect();
    let high: Vec<bool> = low.iter().map(|l| !l).collect();
    if low.iter().all(|&l| l) {
        return Err(SurvivalError::Degenerate);
    }
    Ok(MedianSplit { low, high, cut })
}

/// Whether higher factor values go with better (`P`) or worse (`N`) survival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    P,
    N,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::P => "P",
            Direction::N => "N",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorScreenRow {
    pub factor_name: String,
    /// NaN when `skipped`.
    pub logrank_p: f64,
    pub chi2: f64,
    pub direction: Direction,
    pub median_cut: f64,
    pub significant: bool,
    /// Median split was degenerate.
    pub skipped: bool,
}

/// Log-rank test of each covariate's median split. Direction comes from the
/// sign of the univariate Cox coefficient: negative means `P`.
pub fn univariate_screen(ds: &SurvivalDataset, alpha: f64) -> Result<Vec<FactorScreenRow>> {
    (0..ds.p())
        .into_par_iter()
        .map(|j| screen_column(ds, j, alpha))
        .collect()
}

fn screen_column(ds: &SurvivalDataset, j: usize, alpha: f64) -> Result<FactorScreenRow> {
    let values = ds.raw_column(j);
    let factor_name = ds.names[j].clone();
    let split = match median_split(&values) {
        Ok(s) => s,
        Err(SurvivalError::Degenerate) => {
            return Ok(FactorScreenRow {
                factor_name,
                logrank_p: f64::NAN,
                chi2: f64::NAN,
                direction: Direction::N,
                median_cut: values[0],
                significant: false,
                skipped: true,
            })
        }
        Err(e) => return Err(e),
    };
    let test = logrank_test(ds, &split.low, &split.high)?;
    let single = ds.select_columns(&[j]);
    let fit = cox_fit(&single, 0.0, &CoxOptions::default())?;
    let direction = if fit.beta[0] < 0.0 {
        Direction::P
    } else {
        Direction::N
    };
    Ok(FactorScreenRow {
        factor_name,
        logrank_p: test.p,
        chi2: test.chi2,
        direction,
        median_cut: split.cut,
        significant: test.p < alpha,
        skipped: false,
    })
}

//! Survival statistics: Kaplan-Meier, log-rank, Cox proportional hazards
//! (plain and lasso-penalized), Breslow baseline hazard and univariate
//! factor screening.

mod cox;
mod cv;
pub mod gamma;
mod km;
mod logrank;
mod screen;

pub use cox::{
    baseline_hazard, cox_fit, cox_gradient, cox_loglik, hazard_ratios, risk_index, BaselineHazard,
    CoxFit, CoxOptions, HazardRatio,
};
pub use cv::{cross_validate_lambda, lambda_grid, CvResult, CV_FOLDS, CV_GRID_POINTS};
pub use gamma::chi2_sf;
pub use km::{km_estimate, SurvivalCurve};
pub use logrank::{logrank_test, LogRankResult};
pub use screen::{median_split, univariate_screen, Direction, FactorScreenRow, MedianSplit};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("subject subset is empty")]
    EmptySubset,
    #[error("group `{0}` is empty")]
    EmptyGroup(&'static str),
    #[error("groups overlap at subject {0}")]
    OverlappingGroups(usize),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("coefficient vector has length {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("log-likelihood is not finite")]
    NonFinite,
    #[error("median split is degenerate (one side empty)")]
    Degenerate,
    #[error("no standard errors available")]
    NoSE,
    #[error("need at least {needed} subjects, got {found}")]
    TooFewSubjects { found: usize, needed: usize },
    #[error("penalty must be non-negative and finite, got {0}")]
    InvalidPenalty(f64),
}

pub type Result<T> = std::result::Result<T, SurvivalError>;

/// Right-censored survival data with a named covariate matrix.
///
/// Covariates are kept raw and standardized (population mean / std per
/// column; zero-variance columns use std 1). Model fits work on the
/// standardized copy.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub subject_ids: Vec<String>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub names: Vec<String>,
    raw: DMatrix<f64>,
    standardized: DMatrix<f64>,
    /// `(mean, std)` per column.
    pub column_stats: Vec<(f64, f64)>,
}

impl SurvivalDataset {
    /// `rows[i]` holds the covariates of subject `i` in `names` order.
    pub fn new(
        subject_ids: Vec<String>,
        times: Vec<f64>,
        events: Vec<bool>,
        names: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let n = times.len();
        let p = names.len();
        if subject_ids.len() != n || events.len() != n || rows.len() != n {
            return Err(SurvivalError::InvalidData(
                "ids, times, events and rows must have equal length".into(),
            ));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SurvivalError::InvalidData(format!(
                "time of subject {i} must be positive and finite, got {}",
                times[i]
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name) {
                return Err(SurvivalError::InvalidData(format!("duplicate column `{name}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(SurvivalError::InvalidData(format!(
                    "row {i} has {} values, expected {p}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(SurvivalError::InvalidData(format!(
                    "non-finite covariate at row {i}, column `{}`",
                    names[j]
                )));
            }
        }
        let raw = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Ok(Self::from_raw(subject_ids, times, events, names, raw))
    }

    fn from_raw(
        subject_ids: Vec<String>,
        times: Vec<f64>,
        events: Vec<bool>,
        names: Vec<String>,
        raw: DMatrix<f64>,
    ) -> Self {
        let (n, p) = raw.shape();
        let column_stats: Vec<(f64, f64)> = (0..p)
            .map(|j| {
                if n == 0 {
                    return (0.0, 1.0);
                }
                let col = raw.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let std = var.sqrt();
                (mean, if std > 0.0 { std } else { 1.0 })
            })
            .collect();
        let standardized = DMatrix::from_fn(n, p, |i, j| {
            let (m, s) = column_stats[j];
            (raw[(i, j)] - m) / s
        });
        SurvivalDataset {
            subject_ids,
            times,
            events,
            names,
            raw,
            standardized,
            column_stats,
        }
    }

    /// Times and events only.
    pub fn without_covariates(times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let n = times.len();
        let ids = (0..n).map(|i| i.to_string()).collect();
        Self::new(ids, times, events, Vec::new(), &vec![Vec::new(); n])
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn standardized(&self) -> &DMatrix<f64> {
        &self.standardized
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Raw values of column `j`.
    pub fn raw_column(&self, j: usize) -> Vec<f64> {
        self.raw.column(j).iter().copied().collect()
    }

    /// Columns with zero variance (standardized to all zeros).
    pub fn constant_columns(&self) -> Vec<bool> {
        (0..self.p())
            .map(|j| {
                let c = self.raw.column(j);
                c.iter().all(|v| *v == c[0])
            })
            .collect()
    }

    /// Standardizes a raw covariate vector with this dataset's column stats.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.column_stats)
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Rows selected by `mask`, re-standardized on the subset.
    pub fn subset(&self, mask: &[bool]) -> Self {
        let rows: Vec<usize> = (0..self.n()).filter(|&i| mask[i]).collect();
        self.select_rows(&rows)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let raw = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.raw[(rows[i], j)]);
        Self::from_raw(
            rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            rows.iter().map(|&i| self.times[i]).collect(),
            rows.iter().map(|&i| self.events[i]).collect(),
            self.names.clone(),
            raw,
        )
    }

    /// Keeps the named columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let raw = DMatrix::from_fn(self.n(), columns.len(), |i, j| self.raw[(i, columns[j])]);
        Self::from_raw(
            self.subject_ids.clone(),
            self.times.clone(),
            self.events.clone(),
            columns.iter().map(|&j| self.names[j].clone()).collect(),
            raw,
        )
    }

    /// Subject indices ordered by descending time, ties by index.
    pub(crate) fn descending_time_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| self.times[b].total_cmp(&self.times[a]).then(a.cmp(&b)));
        order
    }
}

//! Query patient to similar cohort to personalized prognostic weights.
//!
//! Each of the patient's patches seeds a relevance-feedback search; the
//! per-patch rankings are fused, resolved to patients, and the cohort's
//! records drive a factor screen and a Cox fit whose standardized
//! coefficients are the patient's factor weights.

mod report;
mod simulate;

pub use report::{
    render_report, write_report_dir, CohortMember, CvSummary, FactorWeight, FitSummary,
    PersonalizedReport, Provenance, ReportFormat, RiskGroup, REPORT_SCHEMA,
};
pub use simulate::{simulate_cohort, standard_clusters, ClusterSpec, SimulatedCohort, SimulationSpec};

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{LambdaChoice, RunConfig};
use crate::index::{
    feedback_search_normalized, fuse_rankings, resolve_cohort, FeedbackOptions, IndexError, Lineage,
    SimilarityIndex,
};
use crate::ingest::RecordTable;
use crate::survival::{
    cox_fit, cross_validate_lambda, hazard_ratios, km_estimate, lambda_grid, median_split, risk_index,
    univariate_screen, CoxOptions, SurvivalError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PersonalizeError {
    #[error("unknown patient `{patient_id}`; nearest known ids: {}", nearest.join(", "))]
    UnknownPatient {
        patient_id: String,
        nearest: Vec<String>,
    },
    #[error("cohort has {found} usable patients, need {needed}")]
    CohortTooSmall { found: usize, needed: usize },
    #[error("no complete record for: {}", .0.join(", "))]
    MissingRecords(Vec<String>),
    #[error("invalid simulation spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, PersonalizeError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizeOptions {
    /// Results per patch search and in the fused ranking.
    pub k: usize,
    pub feedback: FeedbackOptions,
    pub min_cohort: usize,
    pub lambda: LambdaChoice,
    pub cox: CoxOptions,
    pub alpha: f64,
    pub seed: u64,
    /// Factors entering the screen and fit; all record factors when `None`.
    pub factors: Option<Vec<String>>,
    /// Settings echoed into the report provenance.
    pub config_echo: BTreeMap<String, String>,
}

impl Default for PersonalizeOptions {
    fn default() -> Self {
        Self::from(&RunConfig::default())
    }
}

impl From<&RunConfig> for PersonalizeOptions {
    fn from(c: &RunConfig) -> Self {
        PersonalizeOptions {
            k: c.k,
            feedback: c.feedback_options(),
            min_cohort: c.min_cohort,
            lambda: c.lambda,
            cox: c.cox_options(),
            alpha: c.alpha,
            seed: c.seed,
            factors: None,
            config_echo: c.echo(),
        }
    }
}

/// Up to five known patient ids closest to `query` by edit distance.
pub fn nearest_patient_ids(query: &str, lineage: &Lineage) -> Vec<String> {
    let mut known: Vec<&str> = lineage.values().map(|(_, p)| p.as_str()).collect();
    known.sort_unstable();
    known.dedup();
    known.sort_by_key(|p| strsim::levenshtein(query, p));
    known.into_iter().take(5).map(str::to_string).collect()
}

/// Hex SHA-256 of the index's serialized bytes.
pub fn index_digest(index: &SimilarityIndex) -> String {
    hex::encode(Sha256::digest(index.to_bytes()))
}

/// Builds the personalized report for `patient_id`.
pub fn personalize(
    patient_id: &str,
    index: &SimilarityIndex,
    lineage: &Lineage,
    records: &RecordTable,
    options: &PersonalizeOptions,
) -> Result<PersonalizedReport> {
    let mut query_patches: Vec<&str> = lineage
        .iter()
        .filter(|(patch, (_, patient))| patient == patient_id && index.position(patch).is_some())
        .map(|(patch, _)| patch.as_str())
        .collect();
    query_patches.sort_unstable();
    if query_patches.is_empty() {
        return Err(PersonalizeError::UnknownPatient {
            patient_id: patient_id.to_string(),
            nearest: nearest_patient_ids(patient_id, lineage),
        });
    }
    let factors = options
        .factors
        .clone()
        .unwrap_or_else(|| records.factor_names.clone());
    let query_selection = records.select(Some(&[patient_id.to_string()]), &factors)?;
    if query_selection.dataset.n() != 1 {
        return Err(PersonalizeError::MissingRecords(vec![patient_id.to_string()]));
    }
    let query_x: Vec<f64> = query_selection.dataset.raw().row(0).iter().copied().collect();

    let mut lists = Vec::with_capacity(query_patches.len());
    for patch in &query_patches {
        let pos = index.position(patch).expect("filtered above");
        let (ranked, _) = feedback_search_normalized(index, index.row(pos), options.k, &options.feedback)?;
        lists.push(ranked);
    }
    let fused = fuse_rankings(&lists, options.k);
    let cohort = resolve_cohort(&fused, lineage)?;
    let members: Vec<CohortMember> = cohort
        .patient_ids
        .iter()
        .zip(&cohort.support)
        .filter(|(p, _)| p.as_str() != patient_id)
        .map(|(p, s)| CohortMember {
            patient_id: p.clone(),
            support: *s,
        })
        .collect();
    let cohort_ids: Vec<String> = members.iter().map(|m| m.patient_id.clone()).collect();
    let selection = records.select(Some(&cohort_ids), &factors)?;
    let ds = selection.dataset;
    if ds.n() < options.min_cohort {
        return Err(PersonalizeError::CohortTooSmall {
            found: ds.n(),
            needed: options.min_cohort,
        });
    }

    let screen = univariate_screen(&ds, options.alpha)?;
    let (lambda, cv) = match options.lambda {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::CrossValidated => {
            let cv = cross_validate_lambda(&ds, &lambda_grid(), options.seed, &options.cox)?;
            (
                cv.best_lambda,
                Some(CvSummary {
                    seed: cv.seed,
                    lambdas: cv.lambdas.clone(),
                    scores: cv.scores.clone(),
                    best_lambda: cv.best_lambda,
                }),
            )
        }
    };
    let fit = cox_fit(&ds, lambda, &options.cox)?;
    let mut factor_weights: Vec<FactorWeight> = fit
        .names
        .iter()
        .zip(&fit.beta)
        .map(|(name, &weight)| FactorWeight {
            name: name.clone(),
            weight,
        })
        .collect();
    factor_weights.sort_by(|a, b| a.weight.total_cmp(&b.weight).then_with(|| a.name.cmp(&b.name)));

    let cohort_risk = fit.linear_predictors(&ds);
    let query_risk = risk_index(&fit, &query_x)?;
    let (risk_cut, km_low, km_high) = match median_split(&cohort_risk) {
        Ok(split) => (
            split.cut,
            Some(km_estimate(&ds, &split.low)?),
            Some(km_estimate(&ds, &split.high)?),
        ),
        Err(SurvivalError::Degenerate) => (cohort_risk[0], None, None),
        Err(e) => return Err(e.into()),
    };
    let risk_group = if query_risk > risk_cut {
        RiskGroup::High
    } else {
        RiskGroup::Low
    };
    let status = if fit.separation {
        "separation"
    } else if fit.converged {
        "ok"
    } else {
        "not_converged"
    };

    Ok(PersonalizedReport {
        schema: REPORT_SCHEMA.to_string(),
        patient_id: patient_id.to_string(),
        query_patches: query_patches.iter().map(|s| s.to_string()).collect(),
        cohort_size: ds.n(),
        cohort: members,
        factor_weights,
        risk_index: query_risk,
        risk_group,
        risk_cut,
        fit: FitSummary {
            lambda,
            loglik: fit.loglik,
            iterations: fit.iterations,
            converged: fit.converged,
            separation: fit.separation,
            status: status.to_string(),
            se_from_refit: fit.se_from_refit,
            hazard_ratios: hazard_ratios(&fit).unwrap_or_default(),
        },
        screen,
        km_low,
        km_high,
        provenance: Provenance {
            index_sha256: index_digest(index),
            seed: options.seed,
            lambda_selection: cv,
            dropped_missing_records: selection.missing_records,
            dropped_incomplete: selection.incomplete,
            config: options.config_echo.clone(),
        },
    })
}

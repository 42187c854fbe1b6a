use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::survival::{FactorScreenRow, HazardRatio, SurvivalCurve};

use super::{PersonalizeError, Result};

pub const REPORT_SCHEMA: &str = "report_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    Low,
    High,
}

impl std::fmt::Display for RiskGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RiskGroup::Low => "low",
            RiskGroup::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortMember {
    pub patient_id: String,
    /// Fused-ranking patches belonging to this patient.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub lambda: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
    /// `ok`, `not_converged` or `separation`.
    pub status: String,
    pub se_from_refit: bool,
    pub hazard_ratios: Vec<HazardRatio>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvSummary {
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub scores: Vec<f64>,
    pub best_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub index_sha256: String,
    pub seed: u64,
    pub lambda_selection: Option<CvSummary>,
    /// Cohort patients without a record.
    pub dropped_missing_records: Vec<String>,
    /// Cohort patients missing a selected factor.
    pub dropped_incomplete: Vec<String>,
    pub config: BTreeMap<String, String>,
}

/// Personalized factor weights and cohort survival for one patient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonalizedReport {
    pub schema: String,
    pub patient_id: String,
    pub query_patches: Vec<String>,
    /// Patients in the fit.
    pub cohort_size: usize,
    /// Retrieved patients (query excluded) before record filtering.
    pub cohort: Vec<CohortMember>,
    /// Standardized Cox coefficients, ascending.
    pub factor_weights: Vec<FactorWeight>,
    pub risk_index: f64,
    pub risk_group: RiskGroup,
    /// Lower median of the cohort risk indices.
    pub risk_cut: f64,
    pub fit: FitSummary,
    pub screen: Vec<FactorScreenRow>,
    pub km_low: Option<SurvivalCurve>,
    pub km_high: Option<SurvivalCurve>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn format_p(p: f64) -> String {
    if p.is_nan() {
        "skipped".into()
    } else if p < 1e-3 {
        format!("{p:.4e}")
    } else {
        format!("{p:.6}")
    }
}

fn markdown(r: &PersonalizedReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Personalized prognostic report\n");
    let _ = writeln!(out, "- Patient: {}", r.patient_id);
    let _ = writeln!(out, "- Cohort: {} patients", r.cohort_size);
    let _ = writeln!(
        out,
        "- Risk index: {:.3} ({} risk, cohort median {:.3})",
        r.risk_index, r.risk_group, r.risk_cut
    );
    let _ = writeln!(
        out,
        "- Cox fit: lambda {}, {} after {} iterations",
        r.fit.lambda, r.fit.status, r.fit.iterations
    );
    let _ = writeln!(out, "\n## Prognostic factor weights\n");
    let _ = writeln!(out, "| Factor | Weight |");
    let _ = writeln!(out, "|:--|--:|");
    for w in &r.factor_weights {
        let _ = writeln!(out, "| {} | {:.3} |", w.name, w.weight);
    }
    let _ = writeln!(out, "\n## Survival-associated factors\n");
    let _ = writeln!(out, "| Factor | P-Value | P/N |");
    let _ = writeln!(out, "|:--|--:|:--|");
    let significant: Vec<&FactorScreenRow> = r.screen.iter().filter(|s| s.significant).collect();
    if significant.is_empty() {
        let _ = writeln!(out, "| no significant factors | | |");
    }
    for s in significant {
        let _ = writeln!(out, "| {} | {} | {} |", s.factor_name, format_p(s.logrank_p), s.direction);
    }
    if !r.fit.hazard_ratios.is_empty() {
        let _ = writeln!(out, "\n## Hazard ratios\n");
        let _ = writeln!(out, "| Variable | HR (95% CI) | P value |");
        let _ = writeln!(out, "|:--|:--|--:|");
        for h in &r.fit.hazard_ratios {
            let p = h.p.map_or_else(|| "n/a".to_string(), format_p);
            let _ = writeln!(out, "| {} | {} | {} |", h.name, h.format_ci(), p);
        }
    }
    out
}

/// Serializes a report. JSON keeps struct field order; non-finite numbers
/// become `null`.
pub fn render_report(report: &PersonalizedReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Markdown => markdown(report).into_bytes(),
    }
}

const EMPTY_KM: &str = "time,survival,at_risk,events,greenwood_var\n";

/// Writes `report.json`, `report.md`, `km_low.csv`, `km_high.csv` and
/// `cohort.csv` into `dir`.
pub fn write_report_dir(report: &PersonalizedReport, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| PersonalizeError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("report.json"), render_report(report, ReportFormat::Json)).map_err(io)?;
    std::fs::write(dir.join("report.md"), render_report(report, ReportFormat::Markdown)).map_err(io)?;
    for (name, curve) in [("km_low.csv", &report.km_low), ("km_high.csv", &report.km_high)] {
        let text = curve.as_ref().map_or_else(|| EMPTY_KM.to_string(), SurvivalCurve::to_csv);
        std::fs::write(dir.join(name), text).map_err(io)?;
    }
    let mut cohort = String::from("patient_id,support\n");
    for m in &report.cohort {
        let _ = writeln!(cohort, "{},{}", m.patient_id, m.support);
    }
    std::fs::write(dir.join("cohort.csv"), cohort).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::Direction;

    fn fixture() -> PersonalizedReport {
        PersonalizedReport {
            schema: REPORT_SCHEMA.into(),
            patient_id: "P0001".into(),
            query_patches: vec!["P0001-W1-R01".into()],
            cohort_size: 40,
            cohort: vec![CohortMember {
                patient_id: "P0004".into(),
                support: 6,
            }],
            factor_weights: vec![
                FactorWeight {
                    name: "histologic_grade".into(),
                    weight: -0.6761,
                },
                FactorWeight {
                    name: "Ethnicity".into(),
                    weight: 0.3229,
                },
            ],
            risk_index: 0.25,
            risk_group: RiskGroup::High,
            risk_cut: 0.1,
            fit: FitSummary {
                lambda: 0.0,
                loglik: -100.5,
                iterations: 5,
                converged: true,
                separation: false,
                status: "ok".into(),
                se_from_refit: false,
                hazard_ratios: Vec::new(),
            },
            screen: Vec::new(),
            km_low: None,
            km_high: None,
            provenance: Provenance {
                index_sha256: "ab".into(),
                seed: 1,
                lambda_selection: None,
                dropped_missing_records: Vec::new(),
                dropped_incomplete: Vec::new(),
                config: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn markdown_layout() {
        let md = String::from_utf8(render_report(&fixture(), ReportFormat::Markdown)).unwrap();
        assert!(md.contains("| histologic_grade | -0.676 |"));
        assert!(md.contains("| Ethnicity | 0.323 |"));
        assert!(md.contains("| no significant factors | | |"));
    }

    #[test]
    fn json_is_versioned_and_stable() {
        let r = fixture();
        let a = render_report(&r, ReportFormat::Json);
        assert_eq!(a, render_report(&r, ReportFormat::Json));
        let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
        assert_eq!(v["schema"], "report_v1");
        assert_eq!(v["risk_group"], "high");
        let text = String::from_utf8(a).unwrap();
        assert!(text.find("\"schema\"").unwrap() < text.find("\"provenance\"").unwrap());
    }

    #[test]
    fn skipped_screen_rows_render() {
        let mut r = fixture();
        r.screen.push(FactorScreenRow {
            factor_name: "flat".into(),
            logrank_p: f64::NAN,
            chi2: f64::NAN,
            direction: Direction::N,
            median_cut: 1.0,
            significant: false,
            skipped: true,
        });
        r.screen.push(FactorScreenRow {
            factor_name: "grade".into(),
            logrank_p: 2.4023e-7,
            chi2: 30.0,
            direction: Direction::P,
            median_cut: 2.0,
            significant: true,
            skipped: false,
        });
        let json: serde_json::Value = serde_json::from_slice(&render_report(&r, ReportFormat::Json)).unwrap();
        assert!(json["screen"][0]["logrank_p"].is_null());
        let md = String::from_utf8(render_report(&r, ReportFormat::Markdown)).unwrap();
        assert!(md.contains("| grade | 2.4023e-7 | P |"));
        assert!(!md.contains("no significant factors"));
    }
}

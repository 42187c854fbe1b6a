use std::collections::BTreeSet;

use serde::Serialize;

use super::RecordTable;
use crate::features::FeatureVector;
use crate::index::Lineage;

/// A feature row whose ids disagree with its lineage row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageMismatch {
    pub patch_id: String,
    pub feature_ids: (String, String),
    pub lineage_ids: (String, String),
}

/// Cross-file consistency of a features / lineage / records bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleReport {
    pub n_patches: usize,
    pub n_lineage_rows: usize,
    pub n_image_patients: usize,
    pub n_record_patients: usize,
    /// Patients with both images and a record.
    pub n_matched_patients: usize,
    pub patches_without_lineage: Vec<String>,
    pub lineage_mismatches: Vec<LineageMismatch>,
    /// Patients with images but no record.
    pub image_only_patients: Vec<String>,
    /// Patients with a record but no images.
    pub record_only_patients: Vec<String>,
}

impl BundleReport {
    /// Problems that make the bundle inconsistent. Image-only and
    /// record-only patients are counted but are not findings.
    pub fn findings(&self) -> usize {
        self.patches_without_lineage.len() + self.lineage_mismatches.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.findings() == 0
    }
}

/// Checks that every patch has lineage and reconciles image patients
/// against record patients.
pub fn validate_bundle(
    features: &[FeatureVector],
    lineage: &Lineage,
    records: &RecordTable,
) -> BundleReport {
    let mut patches_without_lineage = Vec::new();
    let mut lineage_mismatches = Vec::new();
    for v in features {
        match lineage.get(&v.patch_id) {
            None => patches_without_lineage.push(v.patch_id.clone()),
            Some((wsi, patient)) => {
                if *wsi != v.wsi_id || *patient != v.patient_id {
                    lineage_mismatches.push(LineageMismatch {
                        patch_id: v.patch_id.clone(),
                        feature_ids: (v.wsi_id.clone(), v.patient_id.clone()),
                        lineage_ids: (wsi.clone(), patient.clone()),
                    });
                }
            }
        }
    }
    let image_patients: BTreeSet<&str> = lineage.values().map(|(_, p)| p.as_str()).collect();
    let record_patients: BTreeSet<&str> = records.patient_ids.iter().map(String::as_str).collect();
    BundleReport {
        n_patches: features.len(),
        n_lineage_rows: lineage.len(),
        n_image_patients: image_patients.len(),
        n_record_patients: record_patients.len(),
        n_matched_patients: image_patients.intersection(&record_patients).count(),
        patches_without_lineage,
        lineage_mismatches,
        image_only_patients: image_patients
            .difference(&record_patients)
            .map(|s| s.to_string())
            .collect(),
        record_only_patients: record_patients
            .difference(&image_patients)
            .map(|s| s.to_string())
            .collect(),
    }
}

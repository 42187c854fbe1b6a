use std::collections::{BTreeMap, HashMap};

use super::{IndexError, RankedList, Result};

/// `patch_id -> (wsi_id, patient_id)`.
pub type Lineage = BTreeMap<String, (String, String)>;

/// Patients behind a ranked patch list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    /// Ordered by support (descending), then best patch rank.
    pub patient_ids: Vec<String>,
    /// Contributing patch count per entry of `patient_ids`.
    pub support: Vec<usize>,
    pub source_patches: Vec<String>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn support_of(&self, patient: &str) -> Option<usize> {
        self.patient_ids
            .iter()
            .position(|p| p == patient)
            .map(|i| self.support[i])
    }
}

/// Maps ranked patches to their patients.
pub fn resolve_cohort(ranked: &RankedList, lineage: &Lineage) -> Result<Cohort> {
    let mut first_rank: HashMap<&str, usize> = HashMap::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (rank, id) in ranked.ids().enumerate() {
        let (_, patient) = lineage
            .get(id)
            .ok_or_else(|| IndexError::MissingLineage(id.to_string()))?;
        first_rank.entry(patient.as_str()).or_insert(rank);
        *counts.entry(patient.as_str()).or_default() += 1;
    }
    let mut patients: Vec<&str> = first_rank.keys().copied().collect();
    patients.sort_by(|a, b| counts[b].cmp(&counts[a]).then(first_rank[a].cmp(&first_rank[b])));
    Ok(Cohort {
        support: patients.iter().map(|p| counts[p]).collect(),
        patient_ids: patients.into_iter().map(str::to_string).collect(),
        source_patches: ranked.ids().map(str::to_string).collect(),
    })
}

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use super::{bad_value, check_header, csv_reader, headers, parse_finite, IngestError, Result};
use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::index::Lineage;

/// Leading identity columns of every feature table.
pub const FEATURE_ID_COLUMNS: [&str; 3] = ["patch_id", "wsi_id", "patient_id"];

fn canonical_header() -> Vec<String> {
    FEATURE_ID_COLUMNS
        .iter()
        .chain(FEATURE_NAMES.iter())
        .map(|s| s.to_string())
        .collect()
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))
}

fn read_vectors<R: Read>(
    reader: &mut csv::Reader<R>,
    columns: &[String],
) -> Result<Vec<FeatureVector>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let patch_id = &record[0];
        if patch_id.is_empty() {
            return Err(bad_value(row, "patch_id", patch_id, "empty id"));
        }
        if !seen.insert(patch_id.to_string()) {
            return Err(IngestError::DuplicateId(patch_id.to_string()));
        }
        let values = (3..record.len())
            .map(|c| parse_finite(&record[c], row, &columns[c]))
            .collect::<Result<Vec<f64>>>()?;
        out.push(FeatureVector::new(patch_id, &record[1], &record[2], values));
    }
    Ok(out)
}

/// Parses a native feature table with the exact canonical header.
pub fn parse_features<R: Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut reader = csv_reader(input);
    let found = headers(&mut reader)?;
    let expected = canonical_header();
    check_header(&found, &expected)?;
    read_vectors(&mut reader, &expected)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureVector>> {
    parse_features(open(path)?)
}

/// Parses an embedding table: the three id columns followed by any number
/// of value columns. Returns the value column names and the vectors.
pub fn parse_embeddings<R: Read>(input: R) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    let mut reader = csv_reader(input);
    let found = headers(&mut reader)?;
    let ids: Vec<String> = FEATURE_ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    if found.len() < 4 || found[..3] != ids[..] {
        let mut expected = ids;
        expected.extend(found.iter().skip(3).cloned());
        if found.len() < 4 {
            expected.push("<value columns>".into());
        }
        check_header(&found, &expected)?;
    }
    let mut names = HashSet::new();
    for name in &found[3..] {
        if !names.insert(name) {
            return Err(IngestError::DuplicateId(name.clone()));
        }
    }
    let vectors = read_vectors(&mut reader, &found)?;
    Ok((found[3..].to_vec(), vectors))
}

pub fn load_embeddings(path: &Path) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    parse_embeddings(open(path)?)
}

/// Renders vectors as CSV under `value_names` (shortest exact decimals).
pub fn features_to_csv(vectors: &[FeatureVector], value_names: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FEATURE_ID_COLUMNS.iter().chain(value_names.iter()))?;
    for v in vectors {
        if v.values.len() != value_names.len() {
            return Err(IngestError::Csv(format!(
                "vector `{}` has {} values for {} columns",
                v.patch_id,
                v.values.len(),
                value_names.len()
            )));
        }
        let mut row = vec![v.patch_id.clone(), v.wsi_id.clone(), v.patient_id.clone()];
        row.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes a native feature table.
pub fn write_features(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    std::fs::write(path, features_to_csv(vectors, &FEATURE_NAMES)?)?;
    Ok(())
}

/// Parses `patch_id,wsi_id,patient_id`.
pub fn parse_lineage<R: Read>(input: R) -> Result<Lineage> {
    let mut reader = csv_reader(input);
    let found = headers(&mut reader)?;
    let expected: Vec<String> = FEATURE_ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    check_header(&found, &expected)?;
    let mut lineage = Lineage::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        for (c, name) in FEATURE_ID_COLUMNS.iter().enumerate() {
            if record[c].is_empty() {
                return Err(bad_value(k + 1, name, "", "empty id"));
            }
        }
        let previous = lineage.insert(
            record[0].to_string(),
            (record[1].to_string(), record[2].to_string()),
        );
        if previous.is_some() {
            return Err(IngestError::DuplicateId(record[0].to_string()));
        }
    }
    Ok(lineage)
}

pub fn load_lineage(path: &Path) -> Result<Lineage> {
    parse_lineage(open(path)?)
}

pub fn lineage_to_csv(lineage: &Lineage) -> String {
    let mut out = String::from("patch_id,wsi_id,patient_id\n");
    for (patch, (wsi, patient)) in lineage {
        out.push_str(&format!("{patch},{wsi},{patient}\n"));
    }
    out
}

pub fn write_lineage(path: &Path, lineage: &Lineage) -> Result<()> {
    std::fs::write(path, lineage_to_csv(lineage))?;
    Ok(())
}

//! Loading and validation of feature tables, lineage and patient records,
//! factor encoding, and rule-based factor extraction from report text.

mod bundle;
mod extract;
mod records;
mod schema;
mod tables;

pub use bundle::{validate_bundle, BundleReport, LineageMismatch};
pub use extract::{
    extract_factors, Extraction, FactorExtractor, RawReport, RuleExtractor, TnmLookup,
    DEFAULT_TNM_TABLE,
};
pub use records::{load_records, parse_records, RecordTable, Reject, Selection};
pub use schema::{FactorKind, FactorSchema, FactorSpec, DEFAULT_SCHEMA};
pub use tables::{
    features_to_csv, load_embeddings, load_features, load_lineage, parse_embeddings,
    parse_features, parse_lineage, write_features, write_lineage, lineage_to_csv, FEATURE_ID_COLUMNS,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("{0}")]
    Io(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("header mismatch: {}", describe_header(.missing, .extra, *.misordered))]
    HeaderMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
        misordered: bool,
    },
    #[error("bad value `{value}` at row {row}, column `{col}`: {reason}")]
    BadValue {
        /// 1-based data row (the header is row 0).
        row: usize,
        col: String,
        value: String,
        reason: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no usable rows")]
    NoUsableRows,
    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("TNM table line {line}: {message}")]
    TnmTable { line: usize, message: String },
}

fn describe_header(missing: &[String], extra: &[String], misordered: bool) -> String {
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing [{}]", missing.join(", ")));
    }
    if !extra.is_empty() {
        parts.push(format!("unexpected [{}]", extra.join(", ")));
    }
    if misordered {
        parts.push("columns out of order".to_string());
    }
    parts.join("; ")
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Compares a header against the expected columns.
pub(crate) fn check_header(found: &[String], expected: &[String]) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    let missing: Vec<String> = expected.iter().filter(|e| !found.contains(e)).cloned().collect();
    let extra: Vec<String> = found.iter().filter(|f| !expected.contains(f)).cloned().collect();
    Err(IngestError::HeaderMismatch {
        misordered: missing.is_empty() && extra.is_empty(),
        missing,
        extra,
    })
}

pub(crate) fn csv_reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(input)
}

pub(crate) fn headers<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Vec<String>> {
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

/// Parses a finite decimal cell.
pub(crate) fn parse_finite(value: &str, row: usize, col: &str) -> Result<f64> {
    match value.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(bad_value(row, col, value, "value must be finite")),
        Err(_) => Err(bad_value(row, col, value, "not a number")),
    }
}

pub(crate) fn bad_value(row: usize, col: &str, value: &str, reason: &str) -> IngestError {
    IngestError::BadValue {
        row,
        col: col.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

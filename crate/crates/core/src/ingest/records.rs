use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use super::{bad_value, check_header, csv_reader, headers, parse_finite, FactorSchema, IngestError, Result};
use crate::survival::{SurvivalDataset, SurvivalError};

const ID_COLUMNS: [&str; 3] = ["patient_id", "time_days", "event"];

/// A record excluded for a missing required factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub row: usize,
    pub patient_id: String,
    pub reason: String,
}

/// Encoded patient records; `None` marks a missing optional factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    pub patient_ids: Vec<String>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub factor_names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub rejects: Vec<Reject>,
}

/// Patients chosen for a fit, split by usability.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub dataset: SurvivalDataset,
    /// Requested patients without any record.
    pub missing_records: Vec<String>,
    /// Patients dropped for a missing selected factor.
    pub incomplete: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na")
}

impl RecordTable {
    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn position(&self, patient_id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == patient_id)
    }

    /// Builds a dataset over `patients` (all when `None`) and `factors`,
    /// dropping patients with any selected factor missing.
    pub fn select(
        &self,
        patients: Option<&[String]>,
        factors: &[String],
    ) -> std::result::Result<Selection, SurvivalError> {
        let columns: Vec<usize> = factors
            .iter()
            .map(|f| {
                self.factor_names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| SurvivalError::InvalidData(format!("unknown factor `{f}`")))
            })
            .collect::<std::result::Result<_, _>>()?;
        let index: HashMap<&str, usize> = self
            .patient_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let requested: Vec<String> = match patients {
            Some(p) => p.to_vec(),
            None => self.patient_ids.clone(),
        };
        let mut missing_records = Vec::new();
        let mut incomplete = Vec::new();
        let (mut ids, mut times, mut events, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for p in requested {
            let Some(&i) = index.get(p.as_str()) else {
                missing_records.push(p);
                continue;
            };
            let row: Option<Vec<f64>> = columns.iter().map(|&j| self.values[i][j]).collect();
            match row {
                Some(r) => {
                    ids.push(p);
                    times.push(self.times[i]);
                    events.push(self.events[i]);
                    rows.push(r);
                }
                None => incomplete.push(p),
            }
        }
        Ok(Selection {
            dataset: SurvivalDataset::new(ids, times, events, factors.to_vec(), &rows)?,
            missing_records,
            incomplete,
        })
    }

    /// `patient_id,time_days,event,<factors>` with `NA` for missing values.
    pub fn to_csv(&self) -> String {
        let mut out = ID_COLUMNS.join(",");
        for f in &self.factor_names {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}",
                self.patient_ids[i],
                self.times[i],
                u8::from(self.events[i])
            ));
            for v in &self.values[i] {
                match v {
                    Some(x) => out.push_str(&format!(",{x}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses records. Without a schema every factor column is continuous.
pub fn parse_records<R: Read>(input: R, schema: Option<&FactorSchema>) -> Result<RecordTable> {
    let mut reader = csv_reader(input);
    let found = headers(&mut reader)?;
    let factor_cols: Vec<String> = found.iter().skip(ID_COLUMNS.len()).cloned().collect();
    let inferred;
    let schema = match schema {
        Some(s) => s,
        None => {
            inferred = FactorSchema::all_continuous(&factor_cols);
            &inferred
        }
    };
    let ids_ok = found.len() >= 3 && found[..3].iter().eq(ID_COLUMNS.iter());
    let found_set: HashSet<&str> = factor_cols.iter().map(String::as_str).collect();
    let schema_set: HashSet<&str> = schema.factors.iter().map(|f| f.name.as_str()).collect();
    if !ids_ok || found_set.len() != factor_cols.len() || found_set != schema_set {
        let expected: Vec<String> = ID_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(schema.names())
            .collect();
        check_header(&found, &expected)?;
        return Err(IngestError::HeaderMismatch {
            missing: Vec::new(),
            extra: Vec::new(),
            misordered: true,
        });
    }
    let specs: Vec<_> = factor_cols
        .iter()
        .map(|c| schema.get(c).expect("header checked"))
        .collect();

    let mut table = RecordTable {
        patient_ids: Vec::new(),
        times: Vec::new(),
        events: Vec::new(),
        factor_names: factor_cols.clone(),
        values: Vec::new(),
        rejects: Vec::new(),
    };
    let mut ids = HashSet::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let patient = record[0].to_string();
        if patient.is_empty() {
            return Err(bad_value(row, "patient_id", "", "empty id"));
        }
        if !ids.insert(patient.clone()) {
            return Err(IngestError::DuplicateId(patient));
        }
        let time = parse_finite(&record[1], row, "time_days")?;
        if time <= 0.0 {
            return Err(bad_value(row, "time_days", &record[1], "time must be positive"));
        }
        let event = match record[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad_value(row, "event", other, "event must be 0 or 1")),
        };
        let mut values = Vec::with_capacity(specs.len());
        let mut reject = None;
        for (j, spec) in specs.iter().enumerate() {
            let cell = &record[3 + j];
            if is_missing(cell) {
                if spec.required && reject.is_none() {
                    reject = Some(format!("required factor `{}` missing", spec.name));
                }
                values.push(None);
                continue;
            }
            let v = spec
                .encode(cell)
                .map_err(|reason| bad_value(row, &spec.name, cell, &reason))?;
            values.push(Some(v));
        }
        if let Some(reason) = reject {
            table.rejects.push(Reject {
                row,
                patient_id: patient,
                reason,
            });
            continue;
        }
        table.patient_ids.push(patient);
        table.times.push(time);
        table.events.push(event);
        table.values.push(values);
    }
    if table.is_empty() {
        return Err(IngestError::NoUsableRows);
    }
    Ok(table)
}

pub fn load_records(path: &Path, schema: Option<&FactorSchema>) -> Result<RecordTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    parse_records(file, schema)
}

//! Python bindings: similarity index, survival statistics, simulation and
//! the personalized report.

use std::path::PathBuf;

use histoprog_core::config::RunConfig;
use histoprog_core::features::io::{load_mask, load_patch};
use histoprog_core::features::{extract_patch_vector, ExtractConfig, FEATURE_NAMES};
use histoprog_core::index::{feedback_search_normalized, FeedbackOptions, RankedList, SimilarityIndex};
use histoprog_core::ingest::{load_embeddings, load_features, load_records};
use histoprog_core::personalize::{
    personalize as run_personalize, render_report, simulate_cohort, PersonalizeOptions, ReportFormat,
    SimulationSpec,
};
use histoprog_core::survival::{self as surv, CoxOptions, SurvivalDataset};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dataset(times: Vec<f64>, events: Vec<bool>, x: Option<Vec<Vec<f64>>>, names: Option<Vec<String>>) -> PyResult<SurvivalDataset> {
    let n = times.len();
    let rows = x.unwrap_or_else(|| vec![Vec::new(); n]);
    let p = rows.first().map_or(0, Vec::len);
    let names = names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
    let ids = (0..n).map(|i| i.to_string()).collect();
    SurvivalDataset::new(ids, times, events, names, &rows).map_err(value_err)
}

fn ranked(list: RankedList) -> Vec<(String, f64)> {
    list.entries
}

/// Exact weighted nearest-neighbour index over patch vectors.
#[pyclass(name = "Index", module = "histoprog")]
struct PyIndex {
    inner: SimilarityIndex,
}

#[pymethods]
impl PyIndex {
    /// Builds from a `features.csv` (or any-width embedding table).
    #[staticmethod]
    #[pyo3(signature = (path, embeddings = false))]
    fn from_csv(path: PathBuf, embeddings: bool) -> PyResult<Self> {
        let vectors = if embeddings {
            load_embeddings(&path).map_err(value_err)?.1
        } else {
            load_features(&path).map_err(value_err)?
        };
        let inner = SimilarityIndex::build(&vectors).map_err(value_err)?;
        Ok(PyIndex { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = SimilarityIndex::load(&path).map_err(value_err)?;
        Ok(PyIndex { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    /// `[(patch_id, distance), ...]` nearest to a stored patch.
    #[pyo3(signature = (patch_id, k = 500))]
    fn query(&self, patch_id: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let pos = self
            .inner
            .position(patch_id)
            .ok_or_else(|| PyKeyError::new_err(patch_id.to_string()))?;
        let list = self
            .inner
            .query_normalized(self.inner.row(pos), k, self.inner.weights())
            .map_err(value_err)?;
        Ok(ranked(list))
    }

    /// As `query`, after relevance feedback.
    #[pyo3(signature = (patch_id, k = 500, rounds = 10, m_positives = 50, tol = 1e-3))]
    fn feedback(&self, patch_id: &str, k: usize, rounds: usize, m_positives: usize, tol: f64) -> PyResult<Vec<(String, f64)>> {
        let pos = self
            .inner
            .position(patch_id)
            .ok_or_else(|| PyKeyError::new_err(patch_id.to_string()))?;
        let options = FeedbackOptions {
            m_positives,
            max_rounds: rounds,
            tol,
            ..FeedbackOptions::default()
        };
        let (list, _) = feedback_search_normalized(&self.inner, self.inner.row(pos), k, &options).map_err(value_err)?;
        Ok(ranked(list))
    }

    fn __repr__(&self) -> String {
        format!("Index(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Kaplan-Meier curve as a dict of columns.
#[pyfunction]
fn km<'py>(py: Python<'py>, times: Vec<f64>, events: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
    let ds = dataset(times, events, None, None)?;
    let curve = surv::km_estimate(&ds, &vec![true; ds.n()]).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("time", curve.event_times)?;
    d.set_item("survival", curve.survival)?;
    d.set_item("at_risk", curve.at_risk)?;
    d.set_item("events", curve.n_events)?;
    d.set_item("greenwood_var", curve.greenwood_var)?;
    Ok(d)
}

/// Log-rank `(chi2, p)` between subjects with `group` true and false.
#[pyfunction]
fn logrank(times: Vec<f64>, events: Vec<bool>, group: Vec<bool>) -> PyResult<(f64, f64)> {
    let ds = dataset(times, events, None, None)?;
    let other: Vec<bool> = group.iter().map(|g| !g).collect();
    let r = surv::logrank_test(&ds, &group, &other).map_err(value_err)?;
    Ok((r.chi2, r.p))
}

/// Cox fit on standardized covariates. Returns a dict with `names`,
/// `beta`, `beta_raw`, `se`, `loglik`, `iterations`, `converged` and
/// `separation`.
#[pyfunction]
#[pyo3(signature = (times, events, x, names = None, lam = 0.0))]
fn cox_fit<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    events: Vec<bool>,
    x: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
    lam: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ds = dataset(times, events, Some(x), names)?;
    let fit = surv::cox_fit(&ds, lam, &CoxOptions::default()).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("beta_raw", fit.unstandardized_beta())?;
    d.set_item("names", fit.names)?;
    d.set_item("beta", fit.beta)?;
    d.set_item("se", fit.se)?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("converged", fit.converged)?;
    d.set_item("separation", fit.separation)?;
    Ok(d)
}

/// Breslow partial log-likelihood at `beta` on standardized covariates.
#[pyfunction]
fn cox_loglik(times: Vec<f64>, events: Vec<bool>, x: Vec<Vec<f64>>, beta: Vec<f64>) -> PyResult<f64> {
    let ds = dataset(times, events, Some(x), None)?;
    surv::cox_loglik(&ds, &beta).map_err(value_err)
}

/// 31 features of one patch and its nucleus mask.
#[pyfunction]
fn extract_patch(patch: PathBuf, mask: PathBuf) -> PyResult<Vec<f64>> {
    let p = load_patch(&patch).map_err(value_err)?;
    let m = load_mask(&mask).map_err(value_err)?;
    let v = extract_patch_vector(&p, &m, &ExtractConfig::default()).map_err(value_err)?;
    Ok(v.values)
}

/// Writes a synthetic bundle (`features.csv`, `records.csv`, `lineage.csv`,
/// `clusters.csv`) and returns the realized censored fraction.
#[pyfunction]
#[pyo3(signature = (out_dir, n, beta, seed = 0, censor_fraction = 0.2))]
fn simulate(out_dir: PathBuf, n: usize, beta: Vec<f64>, seed: u64, censor_fraction: f64) -> PyResult<f64> {
    let spec = SimulationSpec {
        censor_fraction,
        ..SimulationSpec::new(n, beta, seed)
    };
    let cohort = simulate_cohort(&spec).map_err(value_err)?;
    cohort.write_bundle(&out_dir).map_err(value_err)?;
    Ok(cohort.realized_censor_fraction)
}

/// Personalized report for `patient_id` as `report_v1` JSON text.
#[pyfunction]
#[pyo3(signature = (patient_id, config, markdown = false))]
fn personalize(patient_id: &str, config: PathBuf, markdown: bool) -> PyResult<String> {
    let cfg = RunConfig::load(&config).map_err(value_err)?;
    let features_path = cfg
        .features
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("config needs `features`"))?;
    let records_path = cfg
        .records
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("config needs `records`"))?;
    let features = load_features(features_path).map_err(value_err)?;
    let index = SimilarityIndex::build(&features).map_err(value_err)?;
    let lineage = features
        .iter()
        .map(|v| (v.patch_id.clone(), (v.wsi_id.clone(), v.patient_id.clone())))
        .collect();
    let records = load_records(records_path, None).map_err(value_err)?;
    let report = run_personalize(patient_id, &index, &lineage, &records, &PersonalizeOptions::from(&cfg))
        .map_err(value_err)?;
    let format = if markdown { ReportFormat::Markdown } else { ReportFormat::Json };
    String::from_utf8(render_report(&report, format)).map_err(value_err)
}

#[pymodule]
fn histoprog(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(km, m)?)?;
    m.add_function(wrap_pyfunction!(logrank, m)?)?;
    m.add_function(wrap_pyfunction!(cox_fit, m)?)?;
    m.add_function(wrap_pyfunction!(cox_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(extract_patch, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(personalize, m)?)?;
    Ok(())
}

//! Synthetic cohorts with known survival effects and clustered patch features.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::features::{FeatureVector, FEATURE_DIM, FEATURE_NAMES};
use crate::index::Lineage;
use crate::ingest::{features_to_csv, lineage_to_csv, RecordTable};

use super::{PersonalizeError, Result};

/// One feature-space cluster of patients.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    /// Patch feature vectors are `center + sigma * N(0, I)`.
    pub center: Vec<f64>,
    pub sigma: f64,
    /// Covariates of the cluster's patients are `N(covariate_mean, I)`.
    pub covariate_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n: usize,
    pub true_beta: Vec<f64>,
    pub factor_names: Vec<String>,
    /// Exponential baseline hazard, events per day.
    pub baseline_rate: f64,
    /// Target share of censored subjects.
    pub censor_fraction: f64,
    pub clusters: Vec<ClusterSpec>,
    pub wsis_per_patient: usize,
    pub patches_per_wsi: usize,
    pub seed: u64,
}

/// `count` clusters in `dim` dimensions. Cluster `c` sits at `separation`
/// along every dimension `j` with `j % count == c`.
pub fn standard_clusters(count: usize, dim: usize, separation: f64, sigma: f64, p: usize) -> Vec<ClusterSpec> {
    (0..count)
        .map(|c| ClusterSpec {
            center: (0..dim)
                .map(|j| if j % count == c { separation } else { 0.0 })
                .collect(),
            sigma,
            covariate_mean: vec![0.0; p],
        })
        .collect()
}

impl SimulationSpec {
    /// Defaults: covariates named `x1..xp`, rate 0.01/day, 20% censoring,
    /// three well separated 31-dimensional clusters, 2 slides of 3 patches
    /// per patient.
    pub fn new(n: usize, true_beta: Vec<f64>, seed: u64) -> Self {
        let p = true_beta.len();
        SimulationSpec {
            n,
            factor_names: (1..=p).map(|j| format!("x{j}")).collect(),
            true_beta,
            baseline_rate: 0.01,
            censor_fraction: 0.2,
            clusters: standard_clusters(3, FEATURE_DIM, 4.0, 1.0, p),
            wsis_per_patient: 2,
            patches_per_wsi: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PersonalizeError::SpecInvalid(m));
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate.is_finite()) {
            return fail("baseline_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return fail("censor_fraction must lie in [0, 1)".into());
        }
        if self.true_beta.iter().any(|b| !b.is_finite()) {
            return fail("true_beta must be finite".into());
        }
        if self.factor_names.len() != self.true_beta.len() {
            return fail("factor_names and true_beta differ in length".into());
        }
        if self.clusters.is_empty() {
            return fail("at least one cluster is required".into());
        }
        let dim = self.clusters[0].center.len();
        for c in &self.clusters {
            if dim == 0 || c.center.len() != dim {
                return fail("cluster centers must share a positive dimension".into());
            }
            if c.covariate_mean.len() != self.true_beta.len() {
                return fail("cluster covariate_mean must match true_beta".into());
            }
            if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                return fail("cluster sigma must be non-negative".into());
            }
        }
        if self.wsis_per_patient == 0 || self.patches_per_wsi == 0 {
            return fail("each patient needs at least one slide and patch".into());
        }
        Ok(())
    }

    /// Flat `key = value` format. Keys: `n`, `seed`, `true_beta`
    /// (comma-separated), `factor_names`, `baseline_rate`,
    /// `censor_fraction`, `clusters`, `cluster_separation`,
    /// `cluster_sigma`, `feature_dim`, `wsis_per_patient`,
    /// `patches_per_wsi`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = std::collections::BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PersonalizeError::SpecInvalid(format!("line {}: expected `key = value`", k + 1)))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        let bad = |key: &str| PersonalizeError::SpecInvalid(format!("invalid `{key}`"));
        let take = |key: &str| values.get(key).map(String::as_str);
        fn num<T: std::str::FromStr>(v: Option<&str>, default: T, key: &str) -> Result<T> {
            match v {
                None => Ok(default),
                Some(s) => s
                    .parse()
                    .map_err(|_| PersonalizeError::SpecInvalid(format!("invalid `{key}`"))),
            }
        }
        let known = [
            "n", "seed", "true_beta", "factor_names", "baseline_rate", "censor_fraction", "clusters",
            "cluster_separation", "cluster_sigma", "feature_dim", "wsis_per_patient", "patches_per_wsi",
        ];
        if let Some(k) = values.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(PersonalizeError::SpecInvalid(format!("unknown key `{k}`")));
        }
        let beta: Vec<f64> = take("true_beta")
            .ok_or_else(|| bad("true_beta"))?
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("true_beta")))
            .collect::<Result<_>>()?;
        let mut spec = SimulationSpec::new(num(take("n"), 0usize, "n")?, beta, num(take("seed"), 0u64, "seed")?);
        if let Some(names) = take("factor_names") {
            spec.factor_names = names.split(',').map(|s| s.trim().to_string()).collect();
        }
        spec.baseline_rate = num(take("baseline_rate"), spec.baseline_rate, "baseline_rate")?;
        spec.censor_fraction = num(take("censor_fraction"), spec.censor_fraction, "censor_fraction")?;
        spec.wsis_per_patient = num(take("wsis_per_patient"), spec.wsis_per_patient, "wsis_per_patient")?;
        spec.patches_per_wsi = num(take("patches_per_wsi"), spec.patches_per_wsi, "patches_per_wsi")?;
        spec.clusters = standard_clusters(
            num(take("clusters"), 3usize, "clusters")?,
            num(take("feature_dim"), FEATURE_DIM, "feature_dim")?,
            num(take("cluster_separation"), 4.0f64, "cluster_separation")?,
            num(take("cluster_sigma"), 1.0f64, "cluster_sigma")?,
            spec.true_beta.len(),
        );
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PersonalizeError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// A generated bundle with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCohort {
    pub features: Vec<FeatureVector>,
    pub feature_names: Vec<String>,
    pub records: RecordTable,
    pub lineage: Lineage,
    /// Cluster of each patient, in record order.
    pub cluster_of: Vec<usize>,
    /// Uncensored event times, in record order.
    pub true_times: Vec<f64>,
    pub realized_censor_fraction: f64,
}

impl SimulatedCohort {
    /// Writes `features.csv`, `records.csv`, `lineage.csv` and
    /// `clusters.csv` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| PersonalizeError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let names: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        let features = features_to_csv(&self.features, &names).map_err(|e| PersonalizeError::Io(e.to_string()))?;
        std::fs::write(dir.join("features.csv"), features).map_err(io)?;
        std::fs::write(dir.join("records.csv"), self.records.to_csv()).map_err(io)?;
        std::fs::write(dir.join("lineage.csv"), lineage_to_csv(&self.lineage)).map_err(io)?;
        let mut clusters = String::from("patient_id,cluster\n");
        for (p, c) in self.records.patient_ids.iter().zip(&self.cluster_of) {
            clusters.push_str(&format!("{p},{c}\n"));
        }
        std::fs::write(dir.join("clusters.csv"), clusters).map_err(io)?;
        Ok(())
    }
}

/// Share of subjects censored by `U(0, c_max)` censoring, in expectation.
fn expected_censoring(times: &[f64], c_max: f64) -> f64 {
    times.iter().map(|t| (t / c_max).min(1.0)).sum::<f64>() / times.len() as f64
}

/// Bisects `c_max` on a log scale so expected censoring hits `target`.
fn calibrate_censoring(times: &[f64], target: f64) -> f64 {
    let max_t = times.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = ((max_t * 1e-12).ln(), (max_t * 1e12).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_censoring(times, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Draws a cohort: patient `i` joins cluster `i % clusters`, covariates are
/// normal around the cluster mean, event times are exponential with rate
/// `baseline_rate * exp(β·x)` and censoring is uniform on `[0, c_max]`
/// with `c_max` calibrated to the target censored share.
pub fn simulate_cohort(spec: &SimulationSpec) -> Result<SimulatedCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.true_beta.len();
    let dim = spec.clusters[0].center.len();
    let mut covariates = Vec::with_capacity(spec.n);
    let mut true_times = Vec::with_capacity(spec.n);
    let mut cluster_of = Vec::with_capacity(spec.n);
    let mut features = Vec::new();
    let mut lineage = Lineage::new();
    let mut patient_ids = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = i % spec.clusters.len();
        let cluster = &spec.clusters[c];
        let x: Vec<f64> = (0..p)
            .map(|j| cluster.covariate_mean[j] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let eta: f64 = x.iter().zip(&spec.true_beta).map(|(a, b)| a * b).sum();
        let u: f64 = 1.0 - rng.random::<f64>();
        true_times.push(-u.ln() / (spec.baseline_rate * eta.exp()));
        covariates.push(x);
        cluster_of.push(c);
        let patient = format!("P{:04}", i + 1);
        for w in 1..=spec.wsis_per_patient {
            let wsi = format!("{patient}-W{w}");
            for r in 1..=spec.patches_per_wsi {
                let patch = format!("{wsi}-R{r:02}");
                let values: Vec<f64> = (0..dim)
                    .map(|j| cluster.center[j] + cluster.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                lineage.insert(patch.clone(), (wsi.clone(), patient.clone()));
                features.push(FeatureVector::new(patch, wsi.clone(), patient.clone(), values));
            }
        }
        patient_ids.push(patient);
    }

    let (times, events): (Vec<f64>, Vec<bool>) = if spec.censor_fraction == 0.0 {
        (true_times.clone(), vec![true; spec.n])
    } else {
        let c_max = calibrate_censoring(&true_times, spec.censor_fraction);
        true_times
            .iter()
            .map(|&t| {
                let c = c_max * (1.0 - rng.random::<f64>());
                if t <= c {
                    (t, true)
                } else {
                    (c, false)
                }
            })
            .unzip()
    };
    let censored = events.iter().filter(|e| !**e).count();
    let feature_names = if dim == FEATURE_DIM {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dim).map(|j| format!("e{j:03}")).collect()
    };
    Ok(SimulatedCohort {
        features,
        feature_names,
        records: RecordTable {
            patient_ids,
            times,
            events,
            factor_names: spec.factor_names.clone(),
            values: covariates
                .into_iter()
                .map(|x| x.into_iter().map(Some).collect())
                .collect(),
            rejects: Vec::new(),
        },
        lineage,
        cluster_of,
        true_times,
        realized_censor_fraction: censored as f64 / spec.n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let spec = SimulationSpec::new(40, vec![0.5, -0.2], 3);
        let a = simulate_cohort(&spec).unwrap();
        assert_eq!(a, simulate_cohort(&spec).unwrap());
        let other = simulate_cohort(&SimulationSpec { seed: 4, ..spec.clone() }).unwrap();
        assert_ne!(a.records.times, other.records.times);
        assert_eq!(a.features.len(), 40 * 6);
        assert_eq!(a.lineage.len(), 240);
    }

    #[test]
    fn censoring_targets() {
        let mut spec = SimulationSpec::new(2000, vec![0.3], 8);
        spec.censor_fraction = 0.0;
        let c = simulate_cohort(&spec).unwrap();
        assert!(c.records.events.iter().all(|&e| e));
        assert_eq!(c.records.times, c.true_times);
        for target in [0.2, 0.5] {
            spec.censor_fraction = target;
            let c = simulate_cohort(&spec).unwrap();
            assert!((c.realized_censor_fraction - target).abs() < 0.05);
            for (t, tt) in c.records.times.iter().zip(&c.true_times) {
                assert!(t <= tt && *t > 0.0);
            }
        }
    }

    #[test]
    fn spec_validation() {
        let ok = SimulationSpec::new(10, vec![1.0], 0);
        assert!(ok.validate().is_ok());
        for bad in [
            SimulationSpec { n: 1, ..ok.clone() },
            SimulationSpec { baseline_rate: 0.0, ..ok.clone() },
            SimulationSpec { censor_fraction: 1.0, ..ok.clone() },
            SimulationSpec { factor_names: vec![], ..ok.clone() },
            SimulationSpec { clusters: vec![], ..ok.clone() },
        ] {
            assert!(matches!(simulate_cohort(&bad), Err(PersonalizeError::SpecInvalid(_))));
        }
    }

    #[test]
    fn spec_text() {
        let s = SimulationSpec::parse("n = 50\nseed = 9\ntrue_beta = 1, -0.5, 0\nclusters = 2\nfeature_dim = 6\n").unwrap();
        assert_eq!(s.n, 50);
        assert_eq!(s.true_beta, vec![1.0, -0.5, 0.0]);
        assert_eq!(s.factor_names, vec!["x1", "x2", "x3"]);
        assert_eq!(s.clusters.len(), 2);
        assert_eq!(s.clusters[1].center, vec![0.0, 4.0, 0.0, 4.0, 0.0, 4.0]);
        assert!(SimulationSpec::parse("n = 5\n").is_err());
        assert!(SimulationSpec::parse("n = 5\ntrue_beta = 1\nbogus = 1\n").is_err());
    }
}

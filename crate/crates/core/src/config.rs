//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::index::FeedbackOptions;
use crate::survival::CoxOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// How the Cox penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    CrossValidated,
}

impl std::fmt::Display for LambdaChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaChoice::Fixed(v) => write!(f, "{v}"),
            LambdaChoice::CrossValidated => f.write_str("cv"),
        }
    }
}

impl std::str::FromStr for LambdaChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaChoice::CrossValidated);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaChoice::Fixed(v)),
            _ => Err(format!("expected `cv` or a non-negative number, got `{s}`")),
        }
    }
}

/// Settings for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub features: Option<PathBuf>,
    pub lineage: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub k: usize,
    pub m_positives: usize,
    pub max_rounds: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub lambda: LambdaChoice,
    pub cox_max_iter: usize,
    pub cox_tol: f64,
    pub min_cohort: usize,
    pub alpha: f64,
    pub seed: u64,
    pub normalize_stain: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            features: None,
            lineage: None,
            records: None,
            index: None,
            schema: None,
            out_dir: None,
            k: 500,
            m_positives: 50,
            max_rounds: 10,
            tol: 1e-3,
            epsilon: 1e-6,
            lambda: LambdaChoice::Fixed(0.0),
            cox_max_iter: 200,
            cox_tol: 1e-9,
            min_cohort: 30,
            alpha: 0.05,
            seed: 0,
            normalize_stain: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| ConfigError::Invalid {
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

impl RunConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                message: "expected `key = value`".into(),
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::Invalid { key, message } => ConfigError::Syntax {
                    line: k + 1,
                    message: format!("`{key}`: {message}"),
                },
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key, as from a file line or a command-line override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "features" => self.features = path(),
            "lineage" => self.lineage = path(),
            "records" => self.records = path(),
            "index" => self.index = path(),
            "schema" => self.schema = path(),
            "out_dir" => self.out_dir = path(),
            "k" => self.k = parse_value(key, value)?,
            "m_positives" => self.m_positives = parse_value(key, value)?,
            "max_rounds" => self.max_rounds = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "lambda" => {
                self.lambda = value.parse().map_err(|message| ConfigError::Invalid {
                    key: key.into(),
                    message,
                })?
            }
            "cox_max_iter" => self.cox_max_iter = parse_value(key, value)?,
            "cox_tol" => self.cox_tol = parse_value(key, value)?,
            "min_cohort" => self.min_cohort = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "normalize_stain" => self.normalize_stain = parse_value(key, value)?,
            _ => {
                return Err(ConfigError::Invalid {
                    key: key.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |key: &str, message: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.k < 1 {
            return invalid("k", "must be at least 1");
        }
        if self.m_positives < 1 {
            return invalid("m_positives", "must be at least 1");
        }
        for (key, v) in [("tol", self.tol), ("epsilon", self.epsilon), ("cox_tol", self.cox_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(key, "must be positive");
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha", "must lie in (0, 1)");
        }
        if self.min_cohort < 2 {
            return invalid("min_cohort", "must be at least 2");
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.features,
            &mut self.lineage,
            &mut self.records,
            &mut self.index,
            &mut self.schema,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn feedback_options(&self) -> FeedbackOptions {
        FeedbackOptions {
            m_positives: self.m_positives,
            max_rounds: self.max_rounds,
            tol: self.tol,
            epsilon: self.epsilon,
        }
    }

    pub fn cox_options(&self) -> CoxOptions {
        CoxOptions {
            max_iter: self.cox_max_iter,
            tol: self.cox_tol,
            ..CoxOptions::default()
        }
    }

    /// Every setting except `out_dir`, as written in a config file. Input
    /// paths appear by file name only so that outputs do not depend on
    /// where the inputs live.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        };
        for (key, p) in [
            ("features", &self.features),
            ("lineage", &self.lineage),
            ("records", &self.records),
            ("index", &self.index),
            ("schema", &self.schema),
        ] {
            if let Some(n) = name(p) {
                m.insert(key.to_string(), n);
            }
        }
        m.insert("k".into(), self.k.to_string());
        m.insert("m_positives".into(), self.m_positives.to_string());
        m.insert("max_rounds".into(), self.max_rounds.to_string());
        m.insert("tol".into(), self.tol.to_string());
        m.insert("epsilon".into(), self.epsilon.to_string());
        m.insert("lambda".into(), self.lambda.to_string());
        m.insert("cox_max_iter".into(), self.cox_max_iter.to_string());
        m.insert("cox_tol".into(), self.cox_tol.to_string());
        m.insert("min_cohort".into(), self.min_cohort.to_string());
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("normalize_stain".into(), self.normalize_stain.to_string());
        m
    }
}

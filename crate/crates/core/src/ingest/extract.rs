//! Deterministic factor extraction from semi-structured report text.

use regex::{Regex, RegexBuilder};

use super::{FactorSchema, IngestError, Result};

/// TNM grouping table shipped with the crate.
pub const DEFAULT_TNM_TABLE: &str = include_str!("../../data/tnm_stage.txt");

/// Cue phrases that negate a finding when they occur among the preceding
/// `NEGATION_WINDOW` tokens.
const NEGATION_CUES: [&str; 7] = [
    "no",
    "not",
    "without",
    "negative for",
    "no evidence of",
    "free of",
    "absence of",
];
const NEGATION_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReport {
    pub patient_id: String,
    pub text: String,
}

impl RawReport {
    pub fn new(patient_id: impl Into<String>, text: impl Into<String>) -> Self {
        RawReport {
            patient_id: patient_id.into(),
            text: text.into(),
        }
    }
}

/// One extracted value with the byte span of the text that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub factor: String,
    pub value: f64,
    /// 1 when every mention agrees, 0.5 when mentions conflict.
    pub confidence: f64,
    pub span: (usize, usize),
    pub matched: String,
}

/// Anything that turns a report into factor values.
pub trait FactorExtractor {
    fn extract(&self, report: &RawReport) -> Vec<Extraction>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Slot {
    Any,
    Exact(String),
}

/// First-match lookup from (T, N, M) categories to an overall stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TnmLookup {
    rows: Vec<([Slot; 3], u8)>,
}

impl TnmLookup {
    pub fn shipped() -> Self {
        Self::parse(DEFAULT_TNM_TABLE).expect("shipped TNM table parses")
    }

    /// Whitespace-separated `T N M stage` rows; `*` is a wildcard and `#`
    /// starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| IngestError::TnmTable { line: k + 1, message };
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != 4 {
                return Err(err(format!("expected 4 columns, got {}", cells.len())));
            }
            let slot = |c: &str| {
                if c == "*" {
                    Slot::Any
                } else {
                    Slot::Exact(c.to_ascii_uppercase())
                }
            };
            let stage: u8 = cells[3]
                .parse()
                .ok()
                .filter(|s| (1..=4).contains(s))
                .ok_or_else(|| err(format!("stage `{}` must be 1-4", cells[3])))?;
            rows.push(([slot(cells[0]), slot(cells[1]), slot(cells[2])], stage));
        }
        Ok(TnmLookup { rows })
    }

    /// Stage for categories such as `("1", "0", "0")`; substage letters
    /// must already be stripped.
    pub fn stage(&self, t: &str, n: &str, m: &str) -> Option<u8> {
        let key = [t.to_ascii_uppercase(), n.to_ascii_uppercase(), m.to_ascii_uppercase()];
        self.rows
            .iter()
            .find(|(slots, _)| {
                slots.iter().zip(&key).all(|(s, k)| match s {
                    Slot::Any => true,
                    Slot::Exact(v) => v == k,
                })
            })
            .map(|(_, stage)| *stage)
    }
}

/// Regular-expression rules for grade, TNM stage, tumour size and
/// negation-aware invasion findings.
#[derive(Debug, Clone)]
pub struct RuleExtractor {
    grade: Regex,
    tnm: Regex,
    size: Regex,
    words: Regex,
    tnm_lookup: TnmLookup,
    invasions: Vec<(String, Vec<Regex>)>,
}

fn phrase_regex(phrase: &str) -> Regex {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    RegexBuilder::new(&format!(r"\b{}\b", words.join(r"\s+")))
        .case_insensitive(true)
        .build()
        .expect("phrase regex")
}

impl Default for RuleExtractor {
    fn default() -> Self {
        Self::new(TnmLookup::shipped())
    }
}

impl RuleExtractor {
    pub fn new(tnm_lookup: TnmLookup) -> Self {
        let ci = |p: &str| RegexBuilder::new(p).case_insensitive(true).build().expect("rule regex");
        let invasions = [
            (
                "lymphnode_invasion",
                &[
                    "lymph node invasion",
                    "lymph node involvement",
                    "lymph node metastasis",
                    "lymph node metastases",
                    "nodal invasion",
                    "nodal metastasis",
                ][..],
            ),
            ("renal_vein_invasion", &["renal vein invasion", "renal vein involvement"][..]),
            ("renal_sinus_invasion", &["renal sinus invasion", "renal sinus fat invasion"][..]),
            ("renal_capsule_invasion", &["renal capsule invasion", "capsular invasion"][..]),
        ]
        .iter()
        .map(|(f, phrases)| (f.to_string(), phrases.iter().map(|p| phrase_regex(p)).collect()))
        .collect();
        RuleExtractor {
            grade: ci(r"\bgrade\s*(I{1,3}V?|[1-4]|G[1-4])\b"),
            tnm: ci(r"\bpT([0-4])([a-c])?\s*N([0-3X])\s*M([01X])\b"),
            size: ci(r"([0-9]+(\.[0-9]+)?)\s*cm\b"),
            words: Regex::new(r"[A-Za-z]+|[.;\n]").expect("token regex"),
            tnm_lookup,
            invasions,
        }
    }

    fn grades(&self, text: &str) -> Vec<(f64, (usize, usize))> {
        self.grade
            .captures_iter(text)
            .filter_map(|c| {
                let token = c[1].to_ascii_uppercase();
                let value = match token.trim_start_matches('G') {
                    "1" | "I" => 1.0,
                    "2" | "II" => 2.0,
                    "3" | "III" => 3.0,
                    "4" | "IV" => 4.0,
                    _ => return None,
                };
                let m = c.get(0).expect("whole match");
                Some((value, (m.start(), m.end())))
            })
            .collect()
    }

    fn stages(&self, text: &str) -> Vec<(f64, (usize, usize))> {
        self.tnm
            .captures_iter(text)
            .filter_map(|c| {
                let stage = self.tnm_lookup.stage(&c[1], &c[3], &c[4])?;
                let m = c.get(0).expect("whole match");
                Some((f64::from(stage), (m.start(), m.end())))
            })
            .collect()
    }

    fn sizes(&self, text: &str) -> Vec<(f64, (usize, usize))> {
        self.size
            .captures_iter(text)
            .filter_map(|c| {
                let v: f64 = c[1].parse().ok()?;
                let m = c.get(0).expect("whole match");
                Some((v, (m.start(), m.end())))
            })
            .collect()
    }

    /// Whether a negation cue sits among the tokens before `start` in the
    /// same sentence.
    fn negated(&self, text: &str, start: usize) -> bool {
        let mut window: Vec<String> = Vec::new();
        for m in self.words.find_iter(&text[..start]) {
            if matches!(m.as_str(), "." | ";" | "\n") {
                window.clear();
            } else {
                window.push(m.as_str().to_ascii_lowercase());
            }
        }
        let tail = &window[window.len().saturating_sub(NEGATION_WINDOW)..];
        NEGATION_CUES.iter().any(|cue| {
            let cue: Vec<&str> = cue.split(' ').collect();
            tail.windows(cue.len()).any(|w| w.iter().zip(&cue).all(|(a, b)| a == b))
        })
    }

    fn findings(&self, text: &str, phrases: &[Regex]) -> Vec<(f64, (usize, usize))> {
        let mut hits: Vec<(f64, (usize, usize))> = phrases
            .iter()
            .flat_map(|re| re.find_iter(text))
            .map(|m| {
                let value = if self.negated(text, m.start()) { 0.0 } else { 1.0 };
                (value, (m.start(), m.end()))
            })
            .collect();
        hits.sort_by_key(|&(_, span)| span);
        hits
    }
}

/// Chooses one mention, scoring agreement.
fn summarize(
    factor: &str,
    text: &str,
    hits: &[(f64, (usize, usize))],
    pick: impl Fn(&[(f64, (usize, usize))]) -> usize,
) -> Option<Extraction> {
    if hits.is_empty() {
        return None;
    }
    let (value, span) = hits[pick(hits)];
    let agree = hits.iter().all(|(v, _)| *v == value);
    Some(Extraction {
        factor: factor.to_string(),
        value,
        confidence: if agree { 1.0 } else { 0.5 },
        span,
        matched: text[span.0..span.1].to_string(),
    })
}

fn argmax(hits: &[(f64, (usize, usize))]) -> usize {
    let mut best = 0;
    for (i, h) in hits.iter().enumerate() {
        if h.0 > hits[best].0 {
            best = i;
        }
    }
    best
}

impl FactorExtractor for RuleExtractor {
    /// Highest grade, first staged TNM string, largest size and any
    /// affirmed invasion win over other mentions.
    fn extract(&self, report: &RawReport) -> Vec<Extraction> {
        let text = report.text.as_str();
        let mut out = Vec::new();
        out.extend(summarize("histologic_grade", text, &self.grades(text), argmax));
        out.extend(summarize("TNM_stage", text, &self.stages(text), |_| 0));
        out.extend(summarize("tumor_size_cm", text, &self.sizes(text), argmax));
        for (factor, phrases) in &self.invasions {
            out.extend(summarize(factor, text, &self.findings(text, phrases), argmax));
        }
        out
    }
}

/// Rule-based extraction restricted to the factors declared in `schema`.
pub fn extract_factors(report: &RawReport, schema: &FactorSchema) -> Vec<Extraction> {
    RuleExtractor::default()
        .extract(report)
        .into_iter()
        .filter(|e| schema.get(&e.factor).is_some())
        .collect()
}

use serde::Serialize;

use super::{Result, SurvivalDataset, SurvivalError};

/// Product-limit survival estimate with Greenwood variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    /// Distinct event times, ascending.
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
    pub greenwood_var: Vec<f64>,
}

impl SurvivalCurve {
    /// Survival just after `t` (1 before the first event time).
    pub fn at(&self, t: f64) -> f64 {
        match self.event_times.iter().rposition(|&e| e <= t) {
            Some(i) => self.survival[i],
            None => 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    /// `time,survival,at_risk,events,greenwood_var` CSV. Probabilities and
    /// variances use 12 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,survival,at_risk,events,greenwood_var\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{:.12},{},{},{:.12}\n",
                self.event_times[i],
                self.survival[i],
                self.at_risk[i],
                self.n_events[i],
                self.greenwood_var[i]
            ));
        }
        out
    }
}

/// Kaplan-Meier estimate over the subjects selected by `subset`.
///
/// Censored subjects stay at risk at their own time; censor-only times do
/// not add steps.
pub fn km_estimate(ds: &SurvivalDataset, subset: &[bool]) -> Result<SurvivalCurve> {
    let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| subset[i]).collect();
    if idx.is_empty() {
        return Err(SurvivalError::EmptySubset);
    }
    idx.sort_by(|&a, &b| ds.times[a].total_cmp(&ds.times[b]));
    let mut curve = SurvivalCurve {
        event_times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        n_events: Vec::new(),
        greenwood_var: Vec::new(),
    };
    let mut at_risk = idx.len();
    let mut s = 1.0;
    let mut greenwood_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let t = ds.times[idx[k]];
        let mut end = k;
        let mut deaths = 0;
        while end < idx.len() && ds.times[idx[end]] == t {
            deaths += usize::from(ds.events[idx[end]]);
            end += 1;
        }
        if deaths > 0 {
            s *= (at_risk - deaths) as f64 / at_risk as f64;
            if deaths < at_risk {
                greenwood_sum += deaths as f64 / (at_risk as f64 * (at_risk - deaths) as f64);
            }
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.n_events.push(deaths);
            curve
                .greenwood_var
                .push(if s > 0.0 { s * s * greenwood_sum } else { 0.0 });
        }
        at_risk -= end - k;
        k = end;
    }
    Ok(curve)
}

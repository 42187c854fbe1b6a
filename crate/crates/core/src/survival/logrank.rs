use super::gamma::chi2_sf;
use super::{Result, SurvivalDataset, SurvivalError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRankResult {
    pub chi2: f64,
    pub p: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
    /// No events in either group: `chi2 = 0`, `p = 1`.
    pub no_events: bool,
}

/// Two-group log-rank test with hypergeometric variance.
pub fn logrank_test(ds: &SurvivalDataset, group_a: &[bool], group_b: &[bool]) -> Result<LogRankResult> {
    if !group_a.iter().any(|&g| g) {
        return Err(SurvivalError::EmptyGroup("A"));
    }
    if !group_b.iter().any(|&g| g) {
        return Err(SurvivalError::EmptyGroup("B"));
    }
    if let Some(i) = (0..ds.n()).find(|&i| group_a[i] && group_b[i]) {
        return Err(SurvivalError::OverlappingGroups(i));
    }
    let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| group_a[i] || group_b[i]).collect();
    idx.sort_by(|&a, &b| ds.times[a].total_cmp(&ds.times[b]));

    let mut n_a = idx.iter().filter(|&&i| group_a[i]).count() as f64;
    let mut n = idx.len() as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let t = ds.times[idx[k]];
        let (mut d, mut d_a, mut leaving, mut leaving_a) = (0.0, 0.0, 0.0, 0.0);
        while k < idx.len() && ds.times[idx[k]] == t {
            let i = idx[k];
            if ds.events[i] {
                d += 1.0;
                if group_a[i] {
                    d_a += 1.0;
                }
            }
            leaving += 1.0;
            if group_a[i] {
                leaving_a += 1.0;
            }
            k += 1;
        }
        if d > 0.0 {
            observed += d_a;
            expected += d * n_a / n;
            if n > 1.0 {
                variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
            }
        }
        n -= leaving;
        n_a -= leaving_a;
    }
    if variance <= 0.0 {
        return Ok(LogRankResult {
            chi2: 0.0,
            p: 1.0,
            observed_a: observed,
            expected_a: expected,
            variance,
            no_events: true,
        });
    }
    let chi2 = (observed - expected).powi(2) / variance;
    Ok(LogRankResult {
        chi2,
        p: chi2_sf(chi2, 1.0),
        observed_a: observed,
        expected_a: expected,
        variance,
        no_events: false,
    })
}

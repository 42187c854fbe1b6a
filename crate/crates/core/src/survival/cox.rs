//! Cox proportional hazards.
//!
//! Model `h(t, x) = h0(t) exp(β·x)` on standardized covariates. The partial
//! log-likelihood uses the Breslow convention for tied event times: every
//! event at time `t` shares the risk set `{j : t_j >= t}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::gamma::normal_two_sided_p;
use super::{Result, SurvivalDataset, SurvivalError};

/// Two-sided 95% normal quantile used for confidence intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    /// Newton iteration cap.
    pub max_iter: usize,
    /// Convergence on `|Δl|`.
    pub tol: f64,
    /// Convergence on `‖Δβ‖∞`.
    pub beta_tol: f64,
    /// Proximal-gradient iteration cap for penalized fits.
    pub penalized_max_iter: usize,
    /// Penalized fits stop when the KKT residual of `-l/n + λ‖β‖₁` is below this.
    pub kkt_tol: f64,
    /// `‖β‖∞` beyond this is reported as separation.
    pub separation_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 200,
            tol: 1e-9,
            beta_tol: 1e-8,
            penalized_max_iter: 20_000,
            kkt_tol: 1e-10,
            separation_bound: 50.0,
        }
    }
}

/// Fitted coefficients in standardized covariate space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    /// `None` where undefined (constant column, inactive lasso coefficient).
    pub se: Vec<Option<f64>>,
    /// Penalized fits take standard errors from an unpenalized refit on the
    /// active set.
    pub se_from_refit: bool,
    pub converged: bool,
    pub iterations: usize,
    pub penalty: f64,
    /// Coefficients diverged past the separation bound.
    pub separation: bool,
    /// Newton's information matrix was singular at some iterate.
    pub used_gradient_fallback: bool,
    /// Standardization of the training data, `(mean, std)` per column.
    pub column_stats: Vec<(f64, f64)>,
}

impl CoxFit {
    /// Coefficients on the raw covariate scale.
    pub fn unstandardized_beta(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.column_stats)
            .map(|(b, (_, s))| b / s)
            .collect()
    }

    /// Indices of nonzero coefficients.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    /// Linear predictors of every subject in `ds` (already standardized).
    pub fn linear_predictors(&self, ds: &SurvivalDataset) -> Vec<f64> {
        let x = ds.standardized();
        (0..ds.n())
            .map(|i| (0..self.beta.len()).map(|j| x[(i, j)] * self.beta[j]).sum())
            .collect()
    }
}

/// Partial log-likelihood pieces at one β.
pub(crate) struct Evaluation {
    pub loglik: f64,
    pub gradient: DVector<f64>,
    pub information: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Order {
    Value,
    Gradient,
    Information,
}

/// One descending-time sweep with a running log-sum-exp scale.
pub(crate) fn evaluate(
    ds: &SurvivalDataset,
    order: &[usize],
    beta: &[f64],
    want: Order,
) -> Result<Evaluation> {
    let p = ds.p();
    if beta.len() != p {
        return Err(SurvivalError::DimensionMismatch {
            expected: p,
            actual: beta.len(),
        });
    }
    let x = ds.standardized();
    let eta: Vec<f64> = (0..ds.n())
        .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    let need_grad = want >= Order::Gradient;
    let need_info = want >= Order::Information;

    let mut scale = f64::NEG_INFINITY;
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(if need_grad { p } else { 0 });
    let mut s2 = DMatrix::<f64>::zeros(if need_info { p } else { 0 }, if need_info { p } else { 0 });
    let mut loglik = 0.0;
    let mut gradient = DVector::<f64>::zeros(p);
    let mut information = DMatrix::<f64>::zeros(if need_info { p } else { 0 }, if need_info { p } else { 0 });
    let mut xi = DVector::<f64>::zeros(p);

    let mut k = 0;
    while k < order.len() {
        let t = ds.times[order[k]];
        let mut events = 0usize;
        let mut eta_events = 0.0;
        let mut x_events = DVector::<f64>::zeros(if need_grad { p } else { 0 });
        while k < order.len() && ds.times[order[k]] == t {
            let i = order[k];
            let e = eta[i];
            if e > scale {
                let f = (scale - e).exp();
                s0 *= f;
                if need_grad {
                    s1 *= f;
                }
                if need_info {
                    s2 *= f;
                }
                scale = e;
            }
            let w = (e - scale).exp();
            s0 += w;
            if need_grad {
                for j in 0..p {
                    xi[j] = x[(i, j)];
                }
                s1.axpy(w, &xi, 1.0);
                if need_info {
                    s2.ger(w, &xi, &xi, 1.0);
                }
            }
            if ds.events[i] {
                events += 1;
                eta_events += e;
                if need_grad {
                    x_events += &xi;
                }
            }
            k += 1;
        }
        if events == 0 {
            continue;
        }
        let d = events as f64;
        loglik += eta_events - d * (scale + s0.ln());
        if need_grad {
            let mean = &s1 / s0;
            gradient += x_events - &mean * d;
            if need_info {
                information += (&s2 / s0 - &mean * mean.transpose()) * d;
            }
        }
    }
    if !loglik.is_finite() {
        return Err(SurvivalError::NonFinite);
    }
    Ok(Evaluation {
        loglik,
        gradient,
        information: need_info.then_some(information),
    })
}

/// Partial log-likelihood `l(β)` with Breslow ties.
pub fn cox_loglik(ds: &SurvivalDataset, beta: &[f64]) -> Result<f64> {
    let order = ds.descending_time_order();
    Ok(evaluate(ds, &order, beta, Order::Value)?.loglik)
}

/// Score vector `∂l/∂β`.
pub fn cox_gradient(ds: &SurvivalDataset, beta: &[f64]) -> Result<Vec<f64>> {
    let order = ds.descending_time_order();
    Ok(evaluate(ds, &order, beta, Order::Gradient)?
        .gradient
        .iter()
        .copied()
        .collect())
}

/// Fits the Cox model. `lambda = 0` maximizes `l(β)` by Newton-Raphson
/// with step halving; `lambda > 0` minimizes `-l(β)/n + λ‖β‖₁` by
/// accelerated proximal gradient with backtracking.
pub fn cox_fit(ds: &SurvivalDataset, lambda: f64, options: &CoxOptions) -> Result<CoxFit> {
    cox_fit_from(ds, lambda, options, None)
}

pub(crate) fn cox_fit_from(
    ds: &SurvivalDataset,
    lambda: f64,
    options: &CoxOptions,
    warm_start: Option<&[f64]>,
) -> Result<CoxFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SurvivalError::InvalidPenalty(lambda));
    }
    if ds.n() < 2 {
        return Err(SurvivalError::TooFewSubjects {
            found: ds.n(),
            needed: 2,
        });
    }
    if lambda == 0.0 {
        newton(ds, options)
    } else {
        let mut fit = proximal_gradient(ds, lambda, options, warm_start)?;
        let active = fit.active_set();
        fit.se = vec![None; ds.p()];
        fit.se_from_refit = true;
        if !active.is_empty() {
            let refit = newton(&ds.select_columns(&active), options)?;
            for (k, &j) in active.iter().enumerate() {
                fit.se[j] = refit.se[k];
            }
        }
        Ok(fit)
    }
}

fn empty_fit(ds: &SurvivalDataset, penalty: f64) -> CoxFit {
    CoxFit {
        names: ds.names.clone(),
        beta: vec![0.0; ds.p()],
        loglik: 0.0,
        loglik_trace: Vec::new(),
        se: vec![None; ds.p()],
        se_from_refit: false,
        converged: false,
        iterations: 0,
        penalty,
        separation: false,
        used_gradient_fallback: false,
        column_stats: ds.column_stats.clone(),
    }
}

fn newton(ds: &SurvivalDataset, options: &CoxOptions) -> Result<CoxFit> {
    let p = ds.p();
    let order = ds.descending_time_order();
    let constant = ds.constant_columns();
    let active: Vec<usize> = (0..p).filter(|&j| !constant[j]).collect();
    let mut fit = empty_fit(ds, 0.0);
    let mut beta = vec![0.0; p];
    let mut current = evaluate(ds, &order, &beta, Order::Information)?;
    fit.loglik_trace.push(current.loglik);

    if active.is_empty() {
        fit.converged = true;
    }
    while !fit.converged && fit.iterations < options.max_iter {
        fit.iterations += 1;
        let info = current.information.as_ref().expect("requested");
        let g_a = DVector::from_iterator(active.len(), active.iter().map(|&j| current.gradient[j]));
        let i_aa = DMatrix::from_fn(active.len(), active.len(), |a, b| info[(active[a], active[b])]);
        let direction = match i_aa.cholesky() {
            Some(chol) => chol.solve(&g_a),
            None => {
                fit.used_gradient_fallback = true;
                g_a
            }
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut candidate = beta.clone();
            for (a, &j) in active.iter().enumerate() {
                candidate[j] += step * direction[a];
            }
            match evaluate(ds, &order, &candidate, Order::Value) {
                Ok(ev) if ev.loglik >= current.loglik => {
                    accepted = Some(candidate);
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some(candidate) = accepted else {
            // No ascent left at floating-point resolution.
            fit.converged = true;
            break;
        };
        let delta_beta = candidate
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let next = evaluate(ds, &order, &candidate, Order::Information)?;
        let delta_l = next.loglik - current.loglik;
        beta = candidate;
        current = next;
        fit.loglik_trace.push(current.loglik);
        if beta.iter().any(|b| b.abs() > options.separation_bound) {
            fit.separation = true;
            break;
        }
        // A flat likelihood with large steps is divergence toward infinite
        // coefficients, not convergence; keep going until the bound trips.
        let diverging = delta_beta > 1.0;
        if (delta_l.abs() < options.tol && !diverging) || delta_beta < options.beta_tol {
            fit.converged = true;
        }
    }

    fit.loglik = current.loglik;
    let info = current.information.as_ref().expect("requested");
    let i_aa = DMatrix::from_fn(active.len(), active.len(), |a, b| info[(active[a], active[b])]);
    if let Some(inv) = i_aa.cholesky().map(|c| c.inverse()) {
        for (a, &j) in active.iter().enumerate() {
            let v = inv[(a, a)];
            if v > 0.0 && v.is_finite() {
                fit.se[j] = Some(v.sqrt());
            }
        }
    }
    fit.beta = beta;
    Ok(fit)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Max KKT violation of `f(β) + λ‖β‖₁` given `∇f`.
fn kkt_residual(beta: &[f64], grad_f: &DVector<f64>, lambda: f64) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(j, &b)| {
            if b != 0.0 {
                (grad_f[j] + lambda * b.signum()).abs()
            } else {
                (grad_f[j].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn proximal_gradient(
    ds: &SurvivalDataset,
    lambda: f64,
    options: &CoxOptions,
    warm_start: Option<&[f64]>,
) -> Result<CoxFit> {
    let p = ds.p();
    let n = ds.n() as f64;
    let order = ds.descending_time_order();
    let mut fit = empty_fit(ds, lambda);
    // Smooth part f = -l/n and its gradient.
    let smooth = |b: &[f64]| -> Result<(f64, DVector<f64>)> {
        let ev = evaluate(ds, &order, b, Order::Gradient)?;
        Ok((-ev.loglik / n, -ev.gradient / n))
    };
    let l1 = |b: &[f64]| b.iter().map(|v| v.abs()).sum::<f64>();

    let mut beta = warm_start.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let (mut f_beta, mut g_beta) = smooth(&beta)?;
    let mut objective = f_beta + lambda * l1(&beta);
    fit.loglik_trace.push(-f_beta * n);
    let mut y = beta.clone();
    let (mut f_y, mut g_y) = (f_beta, g_beta.clone());
    let mut momentum = 1.0f64;
    let mut lipschitz = 1.0f64;

    while fit.iterations < options.penalized_max_iter {
        if kkt_residual(&beta, &g_beta, lambda) < options.kkt_tol {
            fit.converged = true;
            break;
        }
        fit.iterations += 1;
        let (candidate, f_c, g_c) = loop {
            let cand: Vec<f64> = (0..p)
                .map(|j| soft_threshold(y[j] - g_y[j] / lipschitz, lambda / lipschitz))
                .collect();
            let (f_c, g_c) = smooth(&cand)?;
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let linear: f64 = diff.iter().enumerate().map(|(j, d)| g_y[j] * d).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum();
            if f_c <= f_y + linear + 0.5 * lipschitz * quad + 1e-15 * f_y.abs() {
                break (cand, f_c, g_c);
            }
            lipschitz *= 2.0;
            if lipschitz > 1e20 {
                return Err(SurvivalError::NonFinite);
            }
        };
        let obj_c = f_c + lambda * l1(&candidate);
        if obj_c > objective && momentum > 1.0 {
            // Momentum overshoot: restart from the last accepted iterate.
            momentum = 1.0;
            y = beta.clone();
            f_y = f_beta;
            g_y = g_beta.clone();
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let ratio = (momentum - 1.0) / next_momentum;
        y = candidate
            .iter()
            .zip(&beta)
            .map(|(c, b)| c + ratio * (c - b))
            .collect();
        let delta_beta = candidate
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        momentum = next_momentum;
        beta = candidate;
        f_beta = f_c;
        g_beta = g_c;
        objective = obj_c;
        fit.loglik_trace.push(-f_beta * n);
        let (fy, gy) = smooth(&y)?;
        f_y = fy;
        g_y = gy;
        lipschitz *= 0.9;
        if delta_beta == 0.0 && kkt_residual(&beta, &g_beta, lambda) < options.kkt_tol.sqrt() {
            // Fixed point of the prox map at this step size.
            fit.converged = true;
            break;
        }
    }
    fit.loglik = -f_beta * n;
    fit.beta = beta;
    Ok(fit)
}

/// Hazard ratio row for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardRatio {
    pub name: String,
    pub beta: f64,
    pub se: Option<f64>,
    pub hr: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p: Option<f64>,
}

impl HazardRatio {
    /// `HR(low-high)` with three decimals, e.g. `1.320(0.937-2.308)`.
    pub fn format_ci(&self) -> String {
        match (self.ci_low, self.ci_high) {
            (Some(lo), Some(hi)) => format!("{:.3}({:.3}-{:.3})", self.hr, lo, hi),
            _ => format!("{:.3}", self.hr),
        }
    }
}

/// `exp(β)`, 95% Wald interval and two-sided Wald p per covariate.
pub fn hazard_ratios(fit: &CoxFit) -> Result<Vec<HazardRatio>> {
    if fit.se.iter().all(Option::is_none) {
        return Err(SurvivalError::NoSE);
    }
    Ok(fit
        .beta
        .iter()
        .zip(&fit.se)
        .zip(&fit.names)
        .map(|((&b, &se), name)| {
            let (ci_low, ci_high, p) = match se {
                Some(s) => (
                    Some((b - Z_95 * s).exp()),
                    Some((b + Z_95 * s).exp()),
                    Some(if s > 0.0 {
                        normal_two_sided_p(b / s)
                    } else if b == 0.0 {
                        1.0
                    } else {
                        0.0
                    }),
                ),
                None => (None, None, None),
            };
            HazardRatio {
                name: name.clone(),
                beta: b,
                se,
                hr: b.exp(),
                ci_low,
                ci_high,
                p,
            }
        })
        .collect())
}

/// Breslow cumulative baseline hazard at standardized covariates 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineHazard {
    /// `Λ0(t)`, a right-continuous step function.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.iter().rposition(|&s| s <= t) {
            Some(i) => self.cumulative_hazard[i],
            None => 0.0,
        }
    }
}

pub fn baseline_hazard(ds: &SurvivalDataset, fit: &CoxFit) -> Result<BaselineHazard> {
    if fit.beta.len() != ds.p() {
        return Err(SurvivalError::DimensionMismatch {
            expected: ds.p(),
            actual: fit.beta.len(),
        });
    }
    let risk: Vec<f64> = fit.linear_predictors(ds).into_iter().map(f64::exp).collect();
    let order = ds.descending_time_order();
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut denom = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = ds.times[order[k]];
        let mut deaths = 0.0;
        while k < order.len() && ds.times[order[k]] == t {
            denom += risk[order[k]];
            deaths += f64::from(u8::from(ds.events[order[k]]));
            k += 1;
        }
        if deaths > 0.0 {
            steps.push((t, deaths / denom));
        }
    }
    steps.reverse();
    let mut total = 0.0;
    let (times, cumulative_hazard) = steps
        .into_iter()
        .map(|(t, h)| {
            total += h;
            (t, total)
        })
        .unzip();
    Ok(BaselineHazard {
        times,
        cumulative_hazard,
    })
}

/// Linear predictor `β·x` of a raw covariate vector, standardized with the
/// fit's training statistics.
pub fn risk_index(fit: &CoxFit, x: &[f64]) -> Result<f64> {
    if x.len() != fit.beta.len() {
        return Err(SurvivalError::DimensionMismatch {
            expected: fit.beta.len(),
            actual: x.len(),
        });
    }
    Ok(x.iter()
        .zip(&fit.column_stats)
        .zip(&fit.beta)
        .map(|((v, (m, s)), b)| b * (v - m) / s)
        .sum())
}

//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use histoprog::features::{
    estimate_stain_reference, glcm_features, gray_level, stain_normalize, FeatureVector, LabelMask, Patch,
};
use histoprog::index::{feedback_search, FeedbackOptions, SimilarityIndex};
use histoprog::personalize::{personalize, simulate_cohort, PersonalizeOptions, SimulationSpec};
use histoprog::survival::{
    chi2_sf, cox_fit, cox_gradient, km_estimate, logrank_test, CoxOptions, SurvivalDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn dataset(times: Vec<f64>, events: Vec<bool>, rows: Vec<Vec<f64>>) -> SurvivalDataset {
    let n = times.len();
    let p = rows.first().map_or(0, Vec::len);
    SurvivalDataset::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        times,
        events,
        (1..=p).map(|j| format!("x{j}")).collect(),
        &rows,
    )
    .unwrap()
}

/// Breslow partial log-likelihood by direct risk-set enumeration.
fn naive_loglik(ds: &SurvivalDataset, beta: &[f64]) -> f64 {
    let x = ds.standardized();
    let eta: Vec<f64> = (0..ds.n())
        .map(|i| (0..ds.p()).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    (0..ds.n())
        .filter(|&i| ds.events[i])
        .map(|i| {
            let denom: f64 = (0..ds.n())
                .filter(|&j| ds.times[j] >= ds.times[i])
                .map(|j| eta[j].exp())
                .sum();
            eta[i] - denom.ln()
        })
        .sum()
}

fn km_fixture() -> Check {
    let start = Instant::now();
    let times: Vec<f64> = (1..=10).map(f64::from).collect();
    let events: Vec<bool> = (1..=10).map(|t| ![3, 5, 9].contains(&t)).collect();
    let ds = SurvivalDataset::without_covariates(times, events).map_err(|e| e.to_string())?;
    let c = km_estimate(&ds, &[true; 10]).map_err(|e| e.to_string())?;
    // Product-limit steps at the event times with their risk sets.
    let table = [(1.0, 10), (2.0, 9), (4.0, 7), (6.0, 5), (7.0, 4), (8.0, 3), (10.0, 1)];
    ensure(c.len() == table.len(), format!("{} steps, expected {}", c.len(), table.len()))?;
    let (mut s, mut gw) = (1.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for (k, &(t, n)) in table.iter().enumerate() {
        let nf = n as f64;
        s *= (nf - 1.0) / nf;
        if n > 1 {
            gw += 1.0 / (nf * (nf - 1.0));
        }
        let var = if s > 0.0 { s * s * gw } else { 0.0 };
        ensure(c.event_times[k] == t && c.at_risk[k] == n && c.n_events[k] == 1, format!("step {k} layout"))?;
        worst = worst.max((c.survival[k] - s).abs()).max((c.greenwood_var[k] - var).abs());
    }
    ensure(worst < 1e-12, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn logrank_calibration() -> Check {
    let times = vec![3.0, 5.0, 8.0, 11.0, 3.0, 5.0, 8.0, 11.0];
    let events = vec![true, false, true, true, true, false, true, true];
    let ds = SurvivalDataset::without_covariates(times, events).map_err(|e| e.to_string())?;
    let a: Vec<bool> = (0..8).map(|i| i < 4).collect();
    let b: Vec<bool> = a.iter().map(|x| !x).collect();
    let r = logrank_test(&ds, &a, &b).map_err(|e| e.to_string())?;
    ensure(r.chi2 == 0.0 && r.p == 1.0, format!("identical groups gave chi2 {} p {}", r.chi2, r.p))?;
    let q1 = chi2_sf(3.841, 1.0);
    let q2 = chi2_sf(6.635, 1.0);
    ensure((q1 - 0.05).abs() < 5e-4, format!("Q(3.841) = {q1}"))?;
    ensure((q2 - 0.01).abs() < 5e-4, format!("Q(6.635) = {q2}"))?;
    Ok(format!("Q(3.841) = {q1:.5}, Q(6.635) = {q2:.5}"))
}

fn random_instance(rng: &mut ChaCha8Rng) -> SurvivalDataset {
    let n = rng.random_range(5..=20);
    let p = rng.random_range(1..=4);
    loop {
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..=8) as f64).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        if events.iter().any(|&e| e) {
            return dataset(times, events, rows);
        }
    }
}

fn cox_gradient_check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let ds = random_instance(&mut rng);
        let beta: Vec<f64> = (0..ds.p()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g = cox_gradient(&ds, &beta).map_err(|e| e.to_string())?;
        for j in 0..ds.p() {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (naive_loglik(&ds, &up) - naive_loglik(&ds, &down)) / (2.0 * h);
            worst = worst.max((g[j] - fd).abs() / fd.abs().max(1.0));
        }
    }
    ensure(worst < 1e-6, format!("max relative error {worst:e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("max relative error {worst:.1e} over 50 instances"))
}

fn cox_brute_force() -> Check {
    let start = Instant::now();
    let ds = dataset(
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![true, true, false, true, true],
        vec![vec![1.3], vec![-0.4], vec![0.9], vec![0.2], vec![-1.1]],
    );
    let fit = cox_fit(&ds, 0.0, &CoxOptions::default()).map_err(|e| e.to_string())?;
    let (mut best_b, mut best_l) = (f64::NAN, f64::NEG_INFINITY);
    for k in -5000..=5000 {
        let b = k as f64 * 1e-3;
        let l = naive_loglik(&ds, &[b]);
        if l > best_l {
            best_l = l;
            best_b = b;
        }
    }
    ensure(best_b.abs() < 4.999, "grid maximizer on the boundary")?;
    let gap = (fit.beta[0] - best_b).abs();
    ensure(gap < 2e-3, format!("fit {} vs grid {best_b}", fit.beta[0]))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("beta {:.5} vs grid {best_b:.3}", fit.beta[0]))
}

fn normal_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn lasso_limits() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = normal_rows(&mut rng, 120, 3);
    let (times, events): (Vec<f64>, Vec<bool>) = rows
        .iter()
        .map(|x| {
            let eta = 0.8 * x[0] - 0.4 * x[1];
            let u: f64 = 1.0 - rng.random::<f64>();
            let t = -u.ln() / (0.01 * f64::exp(eta));
            let c = 250.0 * (1.0 - rng.random::<f64>());
            (t.min(c), t <= c)
        })
        .unzip();
    let ds = dataset(times, events, rows);
    let opts = CoxOptions::default();
    let plain = cox_fit(&ds, 0.0, &opts).map_err(|e| e.to_string())?;
    let tiny = cox_fit(&ds, 1e-12, &opts).map_err(|e| e.to_string())?;
    let diff = plain
        .beta
        .iter()
        .zip(&tiny.beta)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(diff < 1e-6, format!("lambda 1e-12 differs by {diff:e}"))?;
    let big = cox_fit(&ds, 10.0, &opts).map_err(|e| e.to_string())?;
    ensure(big.beta.iter().all(|&b| b == 0.0), format!("lambda 10 gave {:?}", big.beta))?;
    Ok(format!("max |diff| {diff:.1e}; lambda 10 all zero"))
}

fn simulation_recovery() -> Check {
    let start = Instant::now();
    let truth = [1.0, -0.5, 0.0];
    let sim = simulate_cohort(&SimulationSpec::new(500, truth.to_vec(), 42)).map_err(|e| e.to_string())?;
    let ds = sim
        .records
        .select(None, &sim.records.factor_names)
        .map_err(|e| e.to_string())?
        .dataset;
    let fit = cox_fit(&ds, 0.0, &CoxOptions::default()).map_err(|e| e.to_string())?;
    let raw = fit.unstandardized_beta();
    for (b, t) in raw.iter().zip(&truth) {
        if *t != 0.0 {
            ensure(b.signum() == t.signum(), format!("sign mismatch: {raw:?}"))?;
        }
    }
    let err = raw.iter().zip(&truth).map(|(b, t)| (b - t).abs()).fold(0.0, f64::max);
    ensure(err < 0.15, format!("max error {err:.4} for {raw:?}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "beta {:?}, max error {err:.3}, {:.1}% censored",
        raw.iter().map(|b| (b * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        100.0 * sim.realized_censor_fraction
    ))
}

fn retrieval_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 31;
    let n = 1000;
    let vectors: Vec<FeatureVector> = (0..n)
        .map(|i| {
            let values = (0..dim).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect();
            FeatureVector::new(format!("v{i:04}"), "w", "p", values)
        })
        .collect();
    let index = SimilarityIndex::build(&vectors).map_err(|e| e.to_string())?;
    // Independent z-scoring with population statistics.
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    for j in 0..dim {
        mean[j] = vectors.iter().map(|v| v.values[j]).sum::<f64>() / n as f64;
        std[j] = (vectors.iter().map(|v| (v.values[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    let z = |v: &[f64]| -> Vec<f64> { (0..dim).map(|j| (v[j] - mean[j]) / std[j]).collect() };
    let zs: Vec<Vec<f64>> = vectors.iter().map(|v| z(&v.values)).collect();
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let q: Vec<f64> = if trial % 2 == 0 {
            vectors[rng.random_range(0..n)].values.clone()
        } else {
            (0..dim).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect()
        };
        let zq = z(&q);
        let mut oracle: Vec<(f64, usize)> = zs
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&zq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for k in [1, 10, 500, n] {
            let got = index.query(&q, k).map_err(|e| e.to_string())?;
            ensure(got.len() == k, format!("k={k} returned {}", got.len()))?;
            for (r, (id, d)) in got.entries.iter().enumerate() {
                ensure(*id == vectors[oracle[r].1].patch_id, format!("trial {trial} k={k}: rank {r} mismatch"))?;
                worst = worst.max((d - oracle[r].0).abs());
            }
        }
    }
    ensure(worst < 1e-12, format!("distance deviation {worst:e}"))?;
    for v in vectors.iter().step_by(37) {
        let top = index.query(&v.values, 1).map_err(|e| e.to_string())?;
        ensure(
            top.entries[0].0 == v.patch_id && top.entries[0].1 == 0.0,
            format!("self-query of {} gave {:?}", v.patch_id, top.entries[0]),
        )?;
    }
    Ok(format!("rankings identical, max distance deviation {worst:.1e}"))
}

const CLUSTER_SIZE: usize = 100;

/// Three Gaussian clusters (σ = 0.1) in 31 dimensions. The centers form an
/// equilateral triangle of side 10 in a random plane through the origin.
fn planted_clusters(rng: &mut ChaCha8Rng) -> (Vec<FeatureVector>, Vec<usize>, Vec<Vec<f64>>) {
    let dim = 31;
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.sample(StandardNormal)).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut u = gaussian(rng);
    let nu = dot(&u, &u).sqrt();
    u.iter_mut().for_each(|x| *x /= nu);
    let mut v = gaussian(rng);
    let proj = dot(&u, &v);
    v.iter_mut().zip(&u).for_each(|(x, y)| *x -= proj * y);
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    // Circumradius of a side-10 equilateral triangle.
    let radius = 10.0 / 3f64.sqrt();
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let angle = c as f64 * 2.0 * std::f64::consts::PI / 3.0;
            (0..dim)
                .map(|j| radius * (angle.cos() * u[j] + angle.sin() * v[j]))
                .collect()
        })
        .collect();
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for i in 0..CLUSTER_SIZE {
            let values = center
                .iter()
                .map(|m| m + 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            vectors.push(FeatureVector::new(format!("c{c}-{i:03}"), "w", "p", values));
            labels.push(c);
        }
    }
    (vectors, labels, centers)
}

fn relevance_feedback() -> Check {
    let options = FeedbackOptions::default();
    let (mut max_rounds, mut sum0, mut sum1) = (0usize, 0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (vectors, labels, centers) = planted_clusters(&mut rng);
        let index = SimilarityIndex::build(&vectors).map_err(|e| e.to_string())?;
        let target = rng.random_range(0..3);
        let q = &centers[target];
        let purity = |ids: Vec<String>| {
            let hits = ids
                .iter()
                .filter(|id| labels[index.position(id).unwrap()] == target)
                .count();
            hits as f64 / ids.len() as f64
        };
        let plain = index.query(q, CLUSTER_SIZE).map_err(|e| e.to_string())?;
        let (ranked, state) = feedback_search(&index, q, CLUSTER_SIZE, &options).map_err(|e| e.to_string())?;
        ensure(
            state.converged && state.round <= 10,
            format!("seed {seed}: no convergence after {} rounds", state.round),
        )?;
        let p0 = purity(plain.ids().map(str::to_string).collect());
        let p1 = purity(ranked.ids().map(str::to_string).collect());
        ensure(p1 >= p0, format!("seed {seed}: purity fell from {p0} to {p1}"))?;
        max_rounds = max_rounds.max(state.round);
        sum0 += p0;
        sum1 += p1;
    }
    Ok(format!(
        "100/100 converged (max {max_rounds} rounds); mean purity {:.3} -> {:.3}",
        sum0 / 100.0,
        sum1 / 100.0
    ))
}

/// The eight co-occurrence statistics by direct enumeration of pixel pairs.
fn brute_glcm(patch: &Patch, mask: &LabelMask, levels: usize) -> [f64; 8] {
    let inside: Vec<(usize, usize)> = (0..mask.height)
        .flat_map(|y| (0..mask.width).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y) == 1)
        .collect();
    let grays: Vec<u8> = inside.iter().map(|&(x, y)| gray_level(patch.get(x, y))).collect();
    let (lo, hi) = (*grays.iter().min().unwrap(), *grays.iter().max().unwrap());
    let level_at = |x: isize, y: isize| -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= mask.width || y as usize >= mask.height || mask.get(x as usize, y as usize) != 1 {
            return None;
        }
        let g = gray_level(patch.get(x as usize, y as usize));
        let bin = if hi == lo { 0 } else { ((g - lo) as usize * levels / (hi - lo) as usize).min(levels - 1) };
        Some(bin as f64 + 1.0)
    };
    let mut acc = [0.0; 8];
    let mut used = 0.0;
    for (dx, dy) in [(1isize, 0isize), (1, -1), (0, -1), (-1, -1)] {
        let mut pairs = Vec::new();
        for &(x, y) in &inside {
            let (x, y) = (x as isize, y as isize);
            if let (Some(a), Some(b)) = (level_at(x, y), level_at(x + dx, y + dy)) {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let m = pairs.len() as f64;
        let mean = |f: &dyn Fn(f64, f64) -> f64| pairs.iter().map(|&(a, b)| f(a, b)).sum::<f64>() / m;
        let count_of = |p: (f64, f64)| pairs.iter().filter(|&&q| q == p).count() as f64;
        let energy = pairs.iter().map(|&p| count_of(p)).sum::<f64>() / (m * m);
        let entropy = -pairs.iter().map(|&p| (count_of(p) / m).ln()).sum::<f64>() / m;
        let mx = mean(&|a, _| a);
        let my = mean(&|_, b| b);
        let vx = mean(&|a, _| (a - mx).powi(2));
        let vy = mean(&|_, b| (b - my).powi(2));
        let sigma = (vx * vy).sqrt();
        let (corr, hcorr) = if sigma > 0.0 {
            (mean(&|a, b| (a - mx) * (b - my)) / sigma, (mean(&|a, b| a * b) - mx * my) / sigma)
        } else {
            (1.0, 1.0)
        };
        let stats = [
            energy,
            entropy,
            corr,
            mean(&|a, b| 1.0 / (1.0 + (a - b).powi(2))),
            mean(&|a, b| (a - b).powi(2)),
            mean(&|a, b| (a + b - mx - my).powi(3)),
            mean(&|a, b| (a + b - mx - my).powi(4)),
            hcorr,
        ];
        for (s, v) in acc.iter_mut().zip(stats) {
            *s += v;
        }
        used += 1.0;
    }
    acc.map(|s| s / used)
}

fn texture_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 50 {
        let size = 16;
        let pixels: Vec<[u8; 3]> = (0..size * size).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let fill = rng.random_range(0.4..0.95);
        let labels: Vec<u32> = (0..size * size).map(|_| u32::from(rng.random_bool(fill))).collect();
        let patch = Patch::new(size, size, pixels).unwrap();
        let mask = LabelMask::new(size, size, labels).unwrap();
        let levels = [8, 16, 32][checked % 3];
        let Ok(got) = glcm_features(&patch, &mask, 1, levels) else {
            continue;
        };
        let want = brute_glcm(&patch, &mask, levels);
        for (g, w) in got.to_array().iter().zip(want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
        checked += 1;
    }
    ensure(worst < 1e-10, format!("max relative deviation {worst:e}"))?;
    let flat = Patch::filled(16, 16, [120, 80, 160]).unwrap();
    let mask = LabelMask::new(16, 16, vec![1; 256]).unwrap();
    let g = glcm_features(&flat, &mask, 1, 32).map_err(|e| e.to_string())?;
    ensure(
        g.energy == 1.0 && g.entropy == 0.0 && g.inertia == 0.0,
        format!("constant patch gave {g:?}"),
    )?;
    Ok(format!("50 patches, max relative deviation {worst:.1e}; constant patch exact"))
}

fn he_patch(seed: u64) -> Patch {
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| x / n)
    };
    let h = unit([0.65, 0.70, 0.29]);
    let e = unit([0.07, 0.99, 0.11]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..64 * 64)
        .map(|_| {
            let (ch, ce): (f64, f64) = match rng.random_range(0..4) {
                0 => (rng.random_range(0.3..1.2), rng.random_range(0.0..0.1)),
                1 => (rng.random_range(0.0..0.1), rng.random_range(0.2..0.8)),
                2 => (rng.random_range(0.1..0.9), rng.random_range(0.1..0.6)),
                _ => (rng.random_range(0.0..0.03), rng.random_range(0.0..0.03)),
            };
            [0, 1, 2].map(|k| {
                let od = h[k] * ch + e[k] * ce;
                (256.0 * 10f64.powf(-od) - 1.0).clamp(0.0, 255.0).round() as u8
            })
        })
        .collect();
    Patch::new(64, 64, pixels).unwrap()
}

fn stain_identity() -> Check {
    let mut worst = 0i32;
    for seed in 0..10 {
        let patch = he_patch(seed);
        let r = estimate_stain_reference(&patch, 0.15, 1.0).map_err(|e| e.to_string())?;
        let out = stain_normalize(&patch, &r, &r).map_err(|e| e.to_string())?;
        for (a, b) in patch.pixels.iter().zip(&out.pixels) {
            for k in 0..3 {
                worst = worst.max((a[k] as i32 - b[k] as i32).abs());
            }
        }
    }
    ensure(worst <= 2, format!("a channel moved by {worst}/255"))?;
    Ok(format!("10 patches, max channel change {worst}/255"))
}

fn planted_factor_study() -> Check {
    let start = Instant::now();
    let p = 4;
    let mut wins = 0;
    let mut losses = Vec::new();
    for seed in 0..100u64 {
        let dominant = (seed % p as u64) as usize;
        let others = [0.3, -0.3, 0.0];
        let mut beta = vec![0.0; p];
        let mut rest = others.iter();
        for (j, b) in beta.iter_mut().enumerate() {
            *b = if j == dominant { 1.0 } else { *rest.next().unwrap() };
        }
        let sim = simulate_cohort(&SimulationSpec::new(300, beta, seed)).map_err(|e| e.to_string())?;
        let index = SimilarityIndex::build(&sim.features).map_err(|e| e.to_string())?;
        let report = personalize("P0001", &index, &sim.lineage, &sim.records, &PersonalizeOptions::default())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let top = report
            .factor_weights
            .iter()
            .max_by(|a, b| a.weight.abs().total_cmp(&b.weight.abs()))
            .unwrap();
        if top.name == sim.records.factor_names[dominant] {
            wins += 1;
        } else {
            losses.push(seed);
        }
    }
    ensure(wins >= 95, format!("planted factor won {wins}/100 (lost seeds {losses:?})"))?;
    within(start.elapsed(), 300.0)?;
    Ok(format!("planted factor won {wins}/100 in {:.1} s", start.elapsed().as_secs_f64()))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = tmp.path().join("spec.cfg");
    std::fs::write(&spec, "n = 240\nseed = 12\ntrue_beta = 0.9, -0.4, 0.2\n").map_err(|e| e.to_string())?;
    let bundle = tmp.path().join("bundle");
    let bin = env!("CARGO_BIN_EXE_histoprog");
    let status = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(bin).args(args).arg("--quiet").output().map_err(|e| e.to_string())?;
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    status(&["simulate", "--spec", spec.to_str().unwrap(), "--out", bundle.to_str().unwrap()])?;
    let cfg = bundle.join("run.cfg");
    let mut outputs = Vec::new();
    for run in ["run1", "run2"] {
        let out = tmp.path().join(run);
        status(&[
            "personalize",
            "--patient-id",
            "P0005",
            "--config",
            cfg.to_str().unwrap(),
            "--lambda",
            "cv",
            "--out",
            out.to_str().unwrap(),
        ])?;
        outputs.push(dir_bytes(&out));
    }
    ensure(outputs[0].len() >= 5, format!("only {} files written", outputs[0].len()))?;
    ensure(outputs[0] == outputs[1], "output directories differ")?;
    Ok(format!("{} files byte-identical across two runs", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("KM fixture", km_fixture),
        ("log-rank calibration", logrank_calibration),
        ("Cox gradient vs finite differences", cox_gradient_check),
        ("Cox optimum vs brute force", cox_brute_force),
        ("lasso-Cox limits", lasso_limits),
        ("simulation recovery", simulation_recovery),
        ("retrieval exactness", retrieval_exactness),
        ("relevance feedback", relevance_feedback),
        ("texture oracle", texture_oracle),
        ("stain identity", stain_identity),
        ("planted-factor study", planted_factor_study),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

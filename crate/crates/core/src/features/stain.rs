//! Macenko H&E stain estimation and normalization.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{FeatureError, Patch, Result};

/// Fewest tissue pixels accepted for basis estimation.
pub const MIN_TISSUE_PIXELS: usize = 100;
pub const DEFAULT_OD_THRESHOLD: f64 = 0.15;
pub const DEFAULT_ALPHA_PERCENTILE: f64 = 1.0;
pub const CONCENTRATION_PERCENTILE: f64 = 99.0;

/// Optical-density stain basis of one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainReference {
    /// Unit OD vectors (R, G, B) for hematoxylin then eosin.
    pub stain_matrix: [[f64; 3]; 2],
    /// 99th-percentile concentrations for hematoxylin and eosin.
    pub max_concentrations: [f64; 2],
}

impl StainReference {
    /// Conventional reference basis for H&E.
    pub fn standard() -> Self {
        let h = unit([0.5626, 0.7201, 0.4062]);
        let e = unit([0.2159, 0.8012, 0.5581]);
        StainReference {
            stain_matrix: [h, e],
            max_concentrations: [1.9705, 1.0308],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .stain_matrix
            .iter()
            .flatten()
            .chain(self.max_concentrations.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(FeatureError::InvalidReference("non-finite entry".into()));
        }
        for col in &self.stain_matrix {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(FeatureError::InvalidReference(format!(
                    "stain column norm {norm} is not 1"
                )));
            }
        }
        if self.max_concentrations.iter().any(|&c| c <= 0.0) {
            return Err(FeatureError::InvalidReference(
                "max concentrations must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Least-squares stain concentrations of one OD triple.
    pub fn unmix(&self, od: [f64; 3]) -> [f64; 2] {
        let [h, e] = self.stain_matrix;
        let hh = dot(h, h);
        let ee = dot(e, e);
        let he = dot(h, e);
        let det = hh * ee - he * he;
        let ho = dot(h, od);
        let eo = dot(e, od);
        [(ee * ho - he * eo) / det, (hh * eo - he * ho) / det]
    }

    pub fn compose(&self, c: [f64; 2]) -> [f64; 3] {
        let [h, e] = self.stain_matrix;
        [
            h[0] * c[0] + e[0] * c[1],
            h[1] * c[0] + e[1] * c[1],
            h[2] * c[0] + e[2] * c[1],
        ]
    }

    /// `key = value` text form, one line per field.
    pub fn to_text(&self) -> String {
        let [h, e] = self.stain_matrix;
        format!(
            "hematoxylin = {} {} {}\neosin = {} {} {}\nmax_concentrations = {} {}\n",
            h[0],
            h[1],
            h[2],
            e[0],
            e[1],
            e[2],
            self.max_concentrations[0],
            self.max_concentrations[1]
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut h = None;
        let mut e = None;
        let mut c = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FeatureError::InvalidReference(format!("bad line `{line}`")))?;
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|err| FeatureError::InvalidReference(format!("{key}: {err}")))?;
            match (key.trim(), nums.as_slice()) {
                ("hematoxylin", &[a, b, c3]) => h = Some([a, b, c3]),
                ("eosin", &[a, b, c3]) => e = Some([a, b, c3]),
                ("max_concentrations", &[a, b]) => c = Some([a, b]),
                (k, _) => {
                    return Err(FeatureError::InvalidReference(format!(
                        "unexpected key or arity `{k}`"
                    )))
                }
            }
        }
        let missing = |n: &str| FeatureError::InvalidReference(format!("missing `{n}`"));
        let r = StainReference {
            stain_matrix: [h.ok_or_else(|| missing("hematoxylin"))?, e.ok_or_else(|| missing("eosin"))?],
            max_concentrations: c.ok_or_else(|| missing("max_concentrations"))?,
        };
        r.validate()?;
        Ok(r)
    }
}

/// Beer-Lambert optical density of an 8-bit RGB pixel.
#[inline]
pub fn optical_density(rgb: [u8; 3]) -> [f64; 3] {
    rgb.map(|v| -((v as f64 + 1.0) / 256.0).log10())
}

/// Inverse of [`optical_density`], clamped and rounded to 8 bits.
#[inline]
fn from_optical_density(od: [f64; 3]) -> [u8; 3] {
    od.map(|d| (256.0 * 10f64.powf(-d) - 1.0).clamp(0.0, 255.0).round() as u8)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    v.map(|x| x / n)
}

/// Linear-interpolated percentile (`q` in 0..=100) of a sorted slice.
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Macenko estimate of the H&E basis of `patch`.
///
/// Tissue pixels are those with any OD channel above `beta_od_threshold`.
/// The two stain vectors are the `alpha_percentile` and
/// `100 - alpha_percentile` angular extremes of tissue OD projected on the
/// plane of the two leading covariance eigenvectors.
pub fn estimate_stain_reference(
    patch: &Patch,
    beta_od_threshold: f64,
    alpha_percentile: f64,
) -> Result<StainReference> {
    let all_od: Vec<[f64; 3]> = patch.pixels.iter().map(|&p| optical_density(p)).collect();
    let tissue: Vec<[f64; 3]> = all_od
        .iter()
        .copied()
        .filter(|od| od.iter().any(|&v| v > beta_od_threshold))
        .collect();
    if tissue.len() < MIN_TISSUE_PIXELS {
        return Err(FeatureError::EmptyTissue {
            found: tissue.len(),
            needed: MIN_TISSUE_PIXELS,
        });
    }

    let n = tissue.len() as f64;
    let mean = tissue.iter().fold(Vector3::zeros(), |acc: Vector3<f64>, od| {
        acc + Vector3::from(*od)
    }) / n;
    let mut cov = Matrix3::zeros();
    for od in &tissue {
        let d = Vector3::from(*od) - mean;
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = eig.eigenvalues[order[1]];
    // Below this ratio the second direction is 8-bit rounding noise.
    if !(l1 > 0.0) || l2 <= l1 * 1e-3 {
        return Err(FeatureError::DegenerateStain);
    }
    let orient = |v: Vector3<f64>| if v.sum() < 0.0 { -v } else { v };
    let v1 = orient(eig.eigenvectors.column(order[0]).into_owned());
    let v2 = orient(eig.eigenvectors.column(order[1]).into_owned());

    let mut angles: Vec<f64> = tissue
        .iter()
        .map(|od| {
            let od = Vector3::from(*od);
            od.dot(&v2).atan2(od.dot(&v1))
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    let phi_lo = percentile_sorted(&angles, alpha_percentile);
    let phi_hi = percentile_sorted(&angles, 100.0 - alpha_percentile);
    let direction = |phi: f64| {
        let v = orient(v1 * phi.cos() + v2 * phi.sin());
        unit([v[0], v[1], v[2]])
    };
    let a = direction(phi_lo);
    let b = direction(phi_hi);
    let (h, e) = if a[2] >= b[2] { (a, b) } else { (b, a) };
    if dot(h, e).abs() > 1.0 - 1e-12 {
        return Err(FeatureError::DegenerateStain);
    }

    let mut reference = StainReference {
        stain_matrix: [h, e],
        max_concentrations: [1.0, 1.0],
    };
    let (mut ch, mut ce): (Vec<f64>, Vec<f64>) =
        all_od.iter().map(|&od| {
            let c = reference.unmix(od);
            (c[0], c[1])
        }).unzip();
    ch.sort_by(f64::total_cmp);
    ce.sort_by(f64::total_cmp);
    reference.max_concentrations = [
        percentile_sorted(&ch, CONCENTRATION_PERCENTILE),
        percentile_sorted(&ce, CONCENTRATION_PERCENTILE),
    ];
    if reference.max_concentrations.iter().any(|&c| !(c > 0.0)) {
        return Err(FeatureError::DegenerateStain);
    }
    Ok(reference)
}

/// Maps `patch` from the `source` stain basis onto `target`.
///
/// Fully absorbing pixels (all channels 0) stay black.
pub fn stain_normalize(
    patch: &Patch,
    source: &StainReference,
    target: &StainReference,
) -> Result<Patch> {
    source.validate()?;
    target.validate()?;
    let scale = [
        target.max_concentrations[0] / source.max_concentrations[0],
        target.max_concentrations[1] / source.max_concentrations[1],
    ];
    let pixels = patch
        .pixels
        .iter()
        .map(|&rgb| {
            if rgb == [0, 0, 0] {
                return rgb;
            }
            let c = source.unmix(optical_density(rgb));
            from_optical_density(target.compose([c[0] * scale[0], c[1] * scale[1]]))
        })
        .collect();
    Ok(Patch {
        pixels,
        ..patch.clone()
    })
}

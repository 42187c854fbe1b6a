use super::region::NucleusRegion;
use super::{FeatureError, LabelMask, Patch, Result};

/// Unit offsets `(dx, dy)` for 0°, 45°, 90° and 135° (image y grows downward).
pub const GLCM_OFFSETS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Haralick-style co-occurrence statistics, averaged over [`GLCM_OFFSETS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmFeatures {
    pub energy: f64,
    pub entropy: f64,
    pub correlation: f64,
    pub inverse_difference_moment: f64,
    pub inertia: f64,
    pub cluster_shade: f64,
    pub cluster_prominence: f64,
    pub haralick_correlation: f64,
}

impl GlcmFeatures {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.energy,
            self.entropy,
            self.correlation,
            self.inverse_difference_moment,
            self.inertia,
            self.cluster_shade,
            self.cluster_prominence,
            self.haralick_correlation,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        GlcmFeatures {
            energy: a[0],
            entropy: a[1],
            correlation: a[2],
            inverse_difference_moment: a[3],
            inertia: a[4],
            cluster_shade: a[5],
            cluster_prominence: a[6],
            haralick_correlation: a[7],
        }
    }

    /// Statistics of a normalized `levels x levels` matrix, gray levels
    /// indexed from 1. Zero-variance marginals give correlation 1.
    pub fn from_probabilities(p: &[f64], levels: usize) -> Self {
        let level = |k: usize| (k + 1) as f64;
        let (mut mu_x, mut mu_y) = (0.0, 0.0);
        for i in 0..levels {
            for j in 0..levels {
                let v = p[i * levels + j];
                mu_x += level(i) * v;
                mu_y += level(j) * v;
            }
        }
        let (mut var_x, mut var_y) = (0.0, 0.0);
        let mut energy = 0.0;
        let mut entropy = 0.0;
        let mut cov = 0.0;
        let mut sum_ij = 0.0;
        let mut idm = 0.0;
        let mut inertia = 0.0;
        let mut shade = 0.0;
        let mut prominence = 0.0;
        for i in 0..levels {
            for j in 0..levels {
                let v = p[i * levels + j];
                if v == 0.0 {
                    continue;
                }
                let (gi, gj) = (level(i), level(j));
                let diff = gi - gj;
                let s = gi + gj - mu_x - mu_y;
                var_x += (gi - mu_x).powi(2) * v;
                var_y += (gj - mu_y).powi(2) * v;
                energy += v * v;
                entropy -= v * v.ln();
                cov += (gi - mu_x) * (gj - mu_y) * v;
                sum_ij += gi * gj * v;
                idm += v / (1.0 + diff * diff);
                inertia += diff * diff * v;
                shade += s * s * s * v;
                prominence += s * s * s * s * v;
            }
        }
        let sigma = (var_x * var_y).sqrt();
        let (correlation, haralick_correlation) = if sigma > 0.0 {
            (cov / sigma, (sum_ij - mu_x * mu_y) / sigma)
        } else {
            (1.0, 1.0)
        };
        GlcmFeatures {
            energy,
            entropy,
            correlation,
            inverse_difference_moment: idm,
            inertia,
            cluster_shade: shade,
            cluster_prominence: prominence,
            haralick_correlation,
        }
    }
}

pub fn glcm_features(
    patch: &Patch,
    mask: &LabelMask,
    nucleus_id: u32,
    levels: usize,
) -> Result<GlcmFeatures> {
    mask.check_shape(patch)?;
    let region = NucleusRegion::from_mask(mask, nucleus_id)?;
    from_region(patch, &region, levels)
}

/// Symmetric normalized co-occurrence matrix per offset; `None` where the
/// nucleus holds no pair at that offset.
pub(crate) fn cooccurrence(
    patch: &Patch,
    region: &NucleusRegion,
    levels: usize,
) -> Vec<Option<Vec<f64>>> {
    let grid = region.quantized_grid(patch, levels);
    let bw = region.bbox_width() as isize;
    let bh = region.bbox_height() as isize;
    let at = |x: isize, y: isize| -> Option<usize> {
        if x < 0 || y < 0 || x >= bw || y >= bh {
            None
        } else {
            grid[(y * bw + x) as usize]
        }
    };
    GLCM_OFFSETS
        .iter()
        .map(|&(dx, dy)| {
            let mut counts = vec![0u64; levels * levels];
            let mut total = 0u64;
            for y in 0..bh {
                for x in 0..bw {
                    let (Some(a), Some(b)) = (at(x, y), at(x + dx, y + dy)) else {
                        continue;
                    };
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                    total += 2;
                }
            }
            (total > 0).then(|| {
                counts
                    .iter()
                    .map(|&c| c as f64 / total as f64)
                    .collect()
            })
        })
        .collect()
}

pub(crate) fn from_region(
    patch: &Patch,
    region: &NucleusRegion,
    levels: usize,
) -> Result<GlcmFeatures> {
    if levels < 2 {
        return Err(FeatureError::InvalidLevels(levels));
    }
    let per_offset: Vec<[f64; 8]> = cooccurrence(patch, region, levels)
        .into_iter()
        .flatten()
        .map(|p| GlcmFeatures::from_probabilities(&p, levels).to_array())
        .collect();
    if per_offset.is_empty() {
        return Err(FeatureError::NoPairs(region.label));
    }
    let mut mean = [0.0; 8];
    for row in &per_offset {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= per_offset.len() as f64;
    }
    Ok(GlcmFeatures::from_array(mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_nucleus() {
        let patch = Patch::filled(8, 8, [90, 90, 90]).unwrap();
        let mask = LabelMask::new(8, 8, vec![1; 64]).unwrap();
        let g = glcm_features(&patch, &mask, 1, 32).unwrap();
        assert_eq!(g.energy, 1.0);
        assert_eq!(g.entropy, 0.0);
        assert_eq!(g.inertia, 0.0);
        assert_eq!(g.inverse_difference_moment, 1.0);
        assert_eq!(g.cluster_shade, 0.0);
    }

    #[test]
    fn single_pixel_has_no_pairs() {
        let patch = Patch::filled(3, 3, [90, 90, 90]).unwrap();
        let mut labels = vec![0; 9];
        labels[4] = 7;
        let mask = LabelMask::new(3, 3, labels).unwrap();
        assert_eq!(glcm_features(&patch, &mask, 7, 32), Err(FeatureError::NoPairs(7)));
    }

    #[test]
    fn checkerboard_inertia_by_pair_enumeration() {
        // Two levels in a 2x2 checkerboard: bins 0 and 31.
        let px = vec![[0, 0, 0], [255, 255, 255], [255, 255, 255], [0, 0, 0]];
        let patch = Patch::new(2, 2, px).unwrap();
        let mask = LabelMask::new(2, 2, vec![1; 4]).unwrap();
        let g = glcm_features(&patch, &mask, 1, 32).unwrap();
        // 0°, 90°: every pair differs by 31; 45°, 135°: one equal pair each.
        let inertia_axial = 31.0f64 * 31.0;
        let expected = (inertia_axial + inertia_axial + 0.0 + 0.0) / 4.0;
        assert_eq!(g.inertia, expected);
    }

    #[test]
    fn matrices_sum_to_one() {
        let px: Vec<[u8; 3]> = (0..64u32).map(|i| [(i * 37 % 251) as u8; 3]).collect();
        let patch = Patch::new(8, 8, px).unwrap();
        let labels: Vec<u32> = (0..64).map(|i| u32::from(i % 5 != 0)).collect();
        let mask = LabelMask::new(8, 8, labels).unwrap();
        let region = NucleusRegion::from_mask(&mask, 1).unwrap();
        for p in cooccurrence(&patch, &region, 16).into_iter().flatten() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

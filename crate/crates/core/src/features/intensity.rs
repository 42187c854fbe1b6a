use super::region::NucleusRegion;
use super::{LabelMask, Patch, Result};

/// First-order gray-level statistics (population moments, excess kurtosis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityFeatures {
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl IntensityFeatures {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.mean,
            self.median,
            self.std_dev,
            self.skewness,
            self.kurtosis,
        ]
    }

    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skewness, kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        IntensityFeatures {
            mean,
            median,
            std_dev: m2.sqrt(),
            skewness,
            kurtosis,
        }
    }
}

pub fn intensity_features(
    patch: &Patch,
    mask: &LabelMask,
    nucleus_id: u32,
) -> Result<IntensityFeatures> {
    mask.check_shape(patch)?;
    let region = NucleusRegion::from_mask(mask, nucleus_id)?;
    Ok(from_region(patch, &region))
}

pub(crate) fn from_region(patch: &Patch, region: &NucleusRegion) -> IntensityFeatures {
    let values: Vec<f64> = region.grays(patch).into_iter().map(f64::from).collect();
    IntensityFeatures::from_values(&values)
}

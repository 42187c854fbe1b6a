use super::glcm::GLCM_OFFSETS;
use super::region::NucleusRegion;
use super::{FeatureError, LabelMask, Patch, Result};

/// Gray-level run-length statistics, averaged over the four directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLengthFeatures {
    pub gray_level_nonuniformity: f64,
    pub run_length_nonuniformity: f64,
    pub low_gray_run_emphasis: f64,
    pub high_gray_run_emphasis: f64,
    pub short_run_low_gray_emphasis: f64,
    pub short_run_high_gray_emphasis: f64,
    pub long_run_low_gray_emphasis: f64,
    pub long_run_high_gray_emphasis: f64,
}

impl RunLengthFeatures {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.gray_level_nonuniformity,
            self.run_length_nonuniformity,
            self.low_gray_run_emphasis,
            self.high_gray_run_emphasis,
            self.short_run_low_gray_emphasis,
            self.short_run_high_gray_emphasis,
            self.long_run_low_gray_emphasis,
            self.long_run_high_gray_emphasis,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        RunLengthFeatures {
            gray_level_nonuniformity: a[0],
            run_length_nonuniformity: a[1],
            low_gray_run_emphasis: a[2],
            high_gray_run_emphasis: a[3],
            short_run_low_gray_emphasis: a[4],
            short_run_high_gray_emphasis: a[5],
            long_run_low_gray_emphasis: a[6],
            long_run_high_gray_emphasis: a[7],
        }
    }

    /// Statistics of one run-length matrix given as `(bin, run_length)` runs.
    /// Gray levels are indexed from 1.
    pub fn from_runs(runs: &[(usize, usize)], levels: usize) -> Self {
        let total = runs.len() as f64;
        let max_len = runs.iter().map(|r| r.1).max().unwrap_or(0);
        let mut per_gray = vec![0.0; levels];
        let mut per_len = vec![0.0; max_len + 1];
        let mut acc = [0.0; 6];
        for &(bin, len) in runs {
            per_gray[bin] += 1.0;
            per_len[len] += 1.0;
            let g2 = ((bin + 1) as f64).powi(2);
            let l2 = (len as f64).powi(2);
            acc[0] += 1.0 / g2;
            acc[1] += g2;
            acc[2] += 1.0 / (g2 * l2);
            acc[3] += g2 / l2;
            acc[4] += l2 / g2;
            acc[5] += g2 * l2;
        }
        let gln = per_gray.iter().map(|c| c * c).sum::<f64>() / total;
        let rln = per_len.iter().map(|c| c * c).sum::<f64>() / total;
        let mut out = [gln, rln, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (o, a) in out[2..].iter_mut().zip(acc) {
            *o = a / total;
        }
        Self::from_array(out)
    }
}

pub fn run_length_features(
    patch: &Patch,
    mask: &LabelMask,
    nucleus_id: u32,
    levels: usize,
) -> Result<RunLengthFeatures> {
    mask.check_shape(patch)?;
    let region = NucleusRegion::from_mask(mask, nucleus_id)?;
    from_region(patch, &region, levels)
}

/// Maximal same-bin runs along each direction, as `(bin, length)` lists.
/// Runs stop at the nucleus boundary.
pub(crate) fn runs_per_direction(
    patch: &Patch,
    region: &NucleusRegion,
    levels: usize,
) -> Vec<Vec<(usize, usize)>> {
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
            let mut runs = Vec::new();
            for y in 0..bh {
                for x in 0..bw {
                    let Some(bin) = at(x, y) else { continue };
                    // Only start where the predecessor does not continue this run.
                    if at(x - dx, y - dy) == Some(bin) {
                        continue;
                    }
                    let mut len = 1;
                    while at(x + dx * len as isize, y + dy * len as isize) == Some(bin) {
                        len += 1;
                    }
                    runs.push((bin, len));
                }
            }
            runs
        })
        .collect()
}

pub(crate) fn from_region(
    patch: &Patch,
    region: &NucleusRegion,
    levels: usize,
) -> Result<RunLengthFeatures> {
    if levels < 2 {
        return Err(FeatureError::InvalidLevels(levels));
    }
    let dirs = runs_per_direction(patch, region, levels);
    let mut mean = [0.0; 8];
    for runs in &dirs {
        for (m, v) in mean
            .iter_mut()
            .zip(RunLengthFeatures::from_runs(runs, levels).to_array())
        {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= dirs.len() as f64;
    }
    Ok(RunLengthFeatures::from_array(mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[u8]) -> (Patch, LabelMask) {
        let px = values.iter().map(|&v| [v, v, v]).collect();
        let patch = Patch::new(values.len(), 1, px).unwrap();
        let mask = LabelMask::new(values.len(), 1, vec![1; values.len()]).unwrap();
        (patch, mask)
    }

    #[test]
    fn constant_row_is_one_horizontal_run() {
        let (patch, mask) = row(&[77; 8]);
        let region = NucleusRegion::from_mask(&mask, 1).unwrap();
        let dirs = runs_per_direction(&patch, &region, 32);
        assert_eq!(dirs[0], vec![(0, 8)]);
        let horizontal = RunLengthFeatures::from_runs(&dirs[0], 32);
        assert_eq!(horizontal.run_length_nonuniformity, 1.0);
        // Vertical and diagonal directions see 8 single-pixel runs.
        assert!(dirs[1..].iter().all(|d| d.len() == 8 && d.iter().all(|r| r.1 == 1)));
    }

    #[test]
    fn alternating_row_has_unit_runs() {
        let (patch, mask) = row(&[0, 200, 0, 200, 0, 200, 0, 200]);
        let region = NucleusRegion::from_mask(&mask, 1).unwrap();
        let dirs = runs_per_direction(&patch, &region, 32);
        assert_eq!(dirs[0].len(), 8);
        assert!(dirs[0].iter().all(|r| r.1 == 1));
    }

    #[test]
    fn runs_cover_every_pixel() {
        let px: Vec<[u8; 3]> = (0..49u32).map(|i| [(i * 53 % 7 * 30) as u8; 3]).collect();
        let patch = Patch::new(7, 7, px).unwrap();
        let labels: Vec<u32> = (0..49).map(|i| u32::from(i % 3 != 1)).collect();
        let mask = LabelMask::new(7, 7, labels).unwrap();
        let region = NucleusRegion::from_mask(&mask, 1).unwrap();
        for runs in runs_per_direction(&patch, &region, 8) {
            assert_eq!(runs.iter().map(|r| r.1).sum::<usize>(), region.area());
        }
        let f = run_length_features(&patch, &mask, 1, 8).unwrap();
        assert!(f.to_array().iter().all(|v| v.is_finite() && *v > 0.0));
    }
}

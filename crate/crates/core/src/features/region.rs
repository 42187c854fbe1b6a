use super::{FeatureError, LabelMask, Patch, Result};

/// Pixels of one labelled nucleus, in raster order, with a bounding-box
/// membership bitmap for constant-time neighbour tests.
#[derive(Debug, Clone)]
pub struct NucleusRegion {
    pub label: u32,
    /// `(x, y)` image coordinates.
    pub pixels: Vec<(usize, usize)>,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
    inside: Vec<bool>,
}

impl NucleusRegion {
    pub fn from_mask(mask: &LabelMask, label: u32) -> Result<Self> {
        if label == 0 {
            return Err(FeatureError::UnknownNucleus(label));
        }
        let pixels: Vec<(usize, usize)> = (0..mask.height)
            .flat_map(|y| (0..mask.width).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y) == label)
            .collect();
        if pixels.is_empty() {
            return Err(FeatureError::UnknownNucleus(label));
        }
        Ok(Self::from_pixels(label, pixels))
    }

    /// Every nucleus in the mask, in ascending label order. One pass over the mask.
    pub fn all_from_mask(mask: &LabelMask) -> Vec<Self> {
        let mut buckets: std::collections::BTreeMap<u32, Vec<(usize, usize)>> =
            std::collections::BTreeMap::new();
        for y in 0..mask.height {
            for x in 0..mask.width {
                let l = mask.get(x, y);
                if l > 0 {
                    buckets.entry(l).or_default().push((x, y));
                }
            }
        }
        buckets
            .into_iter()
            .map(|(label, pixels)| Self::from_pixels(label, pixels))
            .collect()
    }

    pub(crate) fn from_pixels(label: u32, pixels: Vec<(usize, usize)>) -> Self {
        let min_x = pixels.iter().map(|p| p.0).min().unwrap();
        let max_x = pixels.iter().map(|p| p.0).max().unwrap();
        let min_y = pixels.iter().map(|p| p.1).min().unwrap();
        let max_y = pixels.iter().map(|p| p.1).max().unwrap();
        let bw = max_x - min_x + 1;
        let bh = max_y - min_y + 1;
        let mut inside = vec![false; bw * bh];
        for &(x, y) in &pixels {
            inside[(y - min_y) * bw + (x - min_x)] = true;
        }
        NucleusRegion {
            label,
            pixels,
            min_x,
            min_y,
            max_x,
            max_y,
            inside,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox_width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn bbox_height(&self) -> usize {
        self.max_y - self.min_y + 1
    }

    /// Membership test on signed image coordinates.
    #[inline]
    pub fn contains(&self, x: isize, y: isize) -> bool {
        if x < self.min_x as isize
            || y < self.min_y as isize
            || x > self.max_x as isize
            || y > self.max_y as isize
        {
            return false;
        }
        let bx = (x - self.min_x as isize) as usize;
        let by = (y - self.min_y as isize) as usize;
        self.inside[by * self.bbox_width() + bx]
    }

    /// 8-bit luma of each region pixel, aligned with `pixels`.
    pub fn grays(&self, patch: &Patch) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&(x, y)| gray_level(patch.get(x, y)))
            .collect()
    }

    /// Quantized bin per bounding-box cell (`None` outside the nucleus).
    pub(crate) fn quantized_grid(&self, patch: &Patch, levels: usize) -> Vec<Option<usize>> {
        let grays = self.grays(patch);
        let bins = quantize(&grays, levels);
        let bw = self.bbox_width();
        let mut grid = vec![None; bw * self.bbox_height()];
        for (&(x, y), &b) in self.pixels.iter().zip(bins.iter()) {
            grid[(y - self.min_y) * bw + (x - self.min_x)] = Some(b);
        }
        grid
    }
}

/// ITU-R BT.601 luma, rounded to the nearest integer.
#[inline]
pub fn gray_level(rgb: [u8; 3]) -> u8 {
    // Integer arithmetic in thousandths keeps the rounding exact.
    let weighted = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
    ((weighted + 500) / 1000) as u8
}

/// Min-max quantization of gray values into `levels` bins `0..levels`.
///
/// A constant input maps entirely to bin 0.
pub fn quantize(grays: &[u8], levels: usize) -> Vec<usize> {
    let lo = grays.iter().copied().min().unwrap_or(0);
    let hi = grays.iter().copied().max().unwrap_or(0);
    if hi == lo {
        return vec![0; grays.len()];
    }
    let span = (hi - lo) as usize;
    grays
        .iter()
        .map(|&g| (((g - lo) as usize * levels) / span).min(levels - 1))
        .collect()
}

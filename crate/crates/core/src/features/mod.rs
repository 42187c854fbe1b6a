//! Nucleus-level histology features.
//!
//! Every nucleus in a labelled instance mask yields 31 values: 10 shape
//! descriptors, 5 first-order intensity statistics, 8 co-occurrence (GLCM)
//! statistics and 8 run-length statistics. A patch is summarised by
//! aggregating its nuclei into one [`FeatureVector`].

mod glcm;
mod intensity;
pub mod io;
mod morphology;
mod region;
mod runlength;
mod stain;

pub use glcm::{glcm_features, GlcmFeatures, GLCM_OFFSETS};
pub use intensity::{intensity_features, IntensityFeatures};
pub use morphology::{morphological_features, MorphologicalFeatures};
pub use region::{gray_level, quantize, NucleusRegion};
pub use runlength::{run_length_features, RunLengthFeatures};
pub use stain::{
    estimate_stain_reference, optical_density, stain_normalize, StainReference,
    CONCENTRATION_PERCENTILE, DEFAULT_ALPHA_PERCENTILE, DEFAULT_OD_THRESHOLD, MIN_TISSUE_PIXELS,
};

use rayon::prelude::*;
use thiserror::Error;

/// Number of values in a native feature vector.
pub const FEATURE_DIM: usize = 31;

/// Canonical CSV column names, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "f01_area",
    "f02_perimeter",
    "f03_equivalent_diameter",
    "f04_major_axis_len",
    "f05_minor_axis_len",
    "f06_eccentricity",
    "f07_solidity",
    "f08_extent",
    "f09_circularity",
    "f10_aspect_ratio",
    "f11_mean",
    "f12_median",
    "f13_std_dev",
    "f14_skewness",
    "f15_kurtosis",
    "f16_energy",
    "f17_entropy",
    "f18_correlation",
    "f19_inverse_difference_moment",
    "f20_inertia",
    "f21_cluster_shade",
    "f22_cluster_prominence",
    "f23_haralick_correlation",
    "f24_gray_level_nonuniformity",
    "f25_run_length_nonuniformity",
    "f26_low_gray_run_emphasis",
    "f27_high_gray_run_emphasis",
    "f28_short_run_low_gray_emphasis",
    "f29_short_run_high_gray_emphasis",
    "f30_long_run_low_gray_emphasis",
    "f31_long_run_high_gray_emphasis",
];

/// Nuclei smaller than this are left out of patch aggregation.
pub const MIN_NUCLEUS_PIXELS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("patch dimensions must be positive, got {width}x{height}")]
    EmptyPatch { width: usize, height: usize },
    #[error("pixel buffer has {actual} entries, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
    #[error("mask is {mask_w}x{mask_h} but patch is {patch_w}x{patch_h}")]
    ShapeMismatch {
        patch_w: usize,
        patch_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("nucleus {0} is not present in the mask")]
    UnknownNucleus(u32),
    #[error("nucleus {0} has no co-occurring pixel pairs")]
    NoPairs(u32),
    #[error("no nucleus produced a valid feature vector")]
    NoValidNuclei,
    #[error("gray levels must be at least 2, got {0}")]
    InvalidLevels(usize),
    #[error("too few tissue pixels for stain estimation ({found} < {needed})")]
    EmptyTissue { found: usize, needed: usize },
    #[error("optical density covariance has rank below 2")]
    DegenerateStain,
    #[error("invalid stain reference: {0}")]
    InvalidReference(String),
    #[error("image i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// An RGB image region with its slide and patient lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<[u8; 3]>,
    pub patch_id: String,
    pub wsi_id: String,
    pub patient_id: String,
}

impl Patch {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FeatureError::EmptyPatch { width, height });
        }
        if pixels.len() != width * height {
            return Err(FeatureError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Patch {
            width,
            height,
            pixels,
            patch_id: String::new(),
            wsi_id: String::new(),
            patient_id: String::new(),
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn with_lineage(
        mut self,
        patch_id: impl Into<String>,
        wsi_id: impl Into<String>,
        patient_id: impl Into<String>,
    ) -> Self {
        self.patch_id = patch_id.into();
        self.wsi_id = wsi_id.into();
        self.patient_id = patient_id.into();
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Instance labels: 0 is background, every positive value one nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FeatureError::EmptyPatch { width, height });
        }
        if labels.len() != width * height {
            return Err(FeatureError::PixelCount {
                expected: width * height,
                actual: labels.len(),
            });
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Distinct positive labels in ascending order.
    pub fn nucleus_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub(crate) fn check_shape(&self, patch: &Patch) -> Result<()> {
        if self.width != patch.width || self.height != patch.height {
            return Err(FeatureError::ShapeMismatch {
                patch_w: patch.width,
                patch_h: patch.height,
                mask_w: self.width,
                mask_h: self.height,
            });
        }
        Ok(())
    }
}

/// All 31 values for one nucleus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NucleusFeatures {
    pub morphology: MorphologicalFeatures,
    pub intensity: IntensityFeatures,
    pub glcm: GlcmFeatures,
    pub run_length: RunLengthFeatures,
}

impl NucleusFeatures {
    /// Values in canonical order (see [`FEATURE_NAMES`]).
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..10].copy_from_slice(&self.morphology.to_array());
        out[10..15].copy_from_slice(&self.intensity.to_array());
        out[15..23].copy_from_slice(&self.glcm.to_array());
        out[23..].copy_from_slice(&self.run_length.to_array());
        out
    }
}

/// One patch summarised as a vector, keyed by its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub patch_id: String,
    pub wsi_id: String,
    pub patient_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(
        patch_id: impl Into<String>,
        wsi_id: impl Into<String>,
        patient_id: impl Into<String>,
        values: Vec<f64>,
    ) -> Self {
        FeatureVector {
            patch_id: patch_id.into(),
            wsi_id: wsi_id.into(),
            patient_id: patient_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Quantization levels for GLCM and run-length texture.
    pub levels: usize,
    pub aggregation: Aggregation,
    pub min_nucleus_pixels: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            levels: 32,
            aggregation: Aggregation::Mean,
            min_nucleus_pixels: MIN_NUCLEUS_PIXELS,
        }
    }
}

/// Computes all 31 features for a single nucleus.
pub fn nucleus_features(
    patch: &Patch,
    mask: &LabelMask,
    nucleus_id: u32,
    levels: usize,
) -> Result<NucleusFeatures> {
    mask.check_shape(patch)?;
    let region = NucleusRegion::from_mask(mask, nucleus_id)?;
    Ok(NucleusFeatures {
        morphology: morphology::from_region(&region),
        intensity: intensity::from_region(patch, &region),
        glcm: glcm::from_region(patch, &region, levels)?,
        run_length: runlength::from_region(patch, &region, levels)?,
    })
}

/// Per-nucleus features aggregated into one patch vector.
///
/// Nuclei below `min_nucleus_pixels` or without any co-occurring pixel pair
/// are skipped. Nuclei are processed in parallel and merged in label order.
pub fn extract_patch_vector(
    patch: &Patch,
    mask: &LabelMask,
    config: &ExtractConfig,
) -> Result<FeatureVector> {
    mask.check_shape(patch)?;
    if config.levels < 2 {
        return Err(FeatureError::InvalidLevels(config.levels));
    }
    let regions = NucleusRegion::all_from_mask(mask);
    let per_nucleus: Vec<Option<[f64; FEATURE_DIM]>> = regions
        .par_iter()
        .map(|region| {
            if region.area() < config.min_nucleus_pixels {
                return Ok(None);
            }
            let glcm = match glcm::from_region(patch, region, config.levels) {
                Ok(g) => g,
                Err(FeatureError::NoPairs(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let f = NucleusFeatures {
                morphology: morphology::from_region(region),
                intensity: intensity::from_region(patch, region),
                glcm,
                run_length: runlength::from_region(patch, region, config.levels)?,
            };
            Ok(Some(f.to_array()))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<[f64; FEATURE_DIM]> = per_nucleus.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(FeatureError::NoValidNuclei);
    }
    let values = aggregate(&rows, config.aggregation);
    Ok(FeatureVector::new(
        patch.patch_id.clone(),
        patch.wsi_id.clone(),
        patch.patient_id.clone(),
        values,
    ))
}

fn aggregate(rows: &[[f64; FEATURE_DIM]], how: Aggregation) -> Vec<f64> {
    (0..FEATURE_DIM)
        .map(|j| {
            let mut column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            match how {
                Aggregation::Mean => column.iter().sum::<f64>() / column.len() as f64,
                Aggregation::Median => {
                    column.sort_by(f64::total_cmp);
                    let n = column.len();
                    if n % 2 == 1 {
                        column[n / 2]
                    } else {
                        0.5 * (column[n / 2 - 1] + column[n / 2])
                    }
                }
            }
        })
        .collect()
}

//! Exact weighted nearest-neighbour search over patch feature vectors.
//!
//! Vectors are z-scored per dimension at build time and compared with a
//! diagonal weighted Euclidean distance. Weights start at one and are
//! re-estimated from relevance feedback; every weight vector sums to the
//! dimension.

mod cohort;
mod feedback;
mod fusion;
mod persist;

pub use cohort::{resolve_cohort, Cohort, Lineage};
pub use feedback::{feedback_search, feedback_search_normalized, FeedbackOptions, FeedbackState};
pub use fusion::{fuse_rankings, RRF_CONSTANT};
pub use persist::{INDEX_FORMAT_VERSION, INDEX_MAGIC};

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureVector;

/// Scan shard size for the parallel query.
const SHARD: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index needs at least one vector")]
    Empty,
    #[error("vector `{id}` holds a non-finite value at dimension {dim}")]
    InvalidValue { id: String, dim: usize },
    #[error("duplicate vector id `{0}`")]
    DuplicateId(String),
    #[error("relevance feedback needs at least 2 positives, got {0}")]
    TooFewPositives(usize),
    #[error("unknown vector id `{0}`")]
    UnknownId(String),
    #[error("no lineage for patch `{0}`")]
    MissingLineage(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("not a PGIX file")]
    BadMagic,
    #[error("unsupported PGIX version {0}")]
    BadVersion(u8),
    #[error("corrupt index file: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, IndexError>;

/// Per-dimension positive weights summing to the dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn uniform(dim: usize) -> Self {
        Weights(vec![1.0; dim])
    }

    /// Rescales positive raw weights so they sum to their length.
    pub fn normalized(raw: Vec<f64>) -> Self {
        let dim = raw.len() as f64;
        let total: f64 = raw.iter().sum();
        Weights(raw.into_iter().map(|w| w * dim / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest relative change `max_j |new_j - old_j| / old_j`.
    pub fn max_relative_change(&self, previous: &Weights) -> f64 {
        self.0
            .iter()
            .zip(&previous.0)
            .map(|(n, o)| (n - o).abs() / o)
            .fold(0.0, f64::max)
    }
}

/// `sqrt(sum_j w_j (a_j - b_j)^2)`.
pub fn weighted_distance(a: &[f64], b: &[f64], w: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(IndexError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if w.len() != a.len() {
        return Err(IndexError::DimensionMismatch {
            expected: a.len(),
            actual: w.len(),
        });
    }
    Ok(squared_distance(a, b, w).sqrt())
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), wj)| {
            let d = x - y;
            wj * d * d
        })
        .sum()
}

/// Ascending-distance result list with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    /// `rank,patch_id,distance` CSV with 1-based ranks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,patch_id,distance\n");
        for (i, (id, d)) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, id, d));
        }
        out
    }
}

/// Per-dimension location and scale used for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Immutable vector store with z-scored rows and a current weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    dim: usize,
    ids: Vec<String>,
    /// Row-major z-scored vectors.
    data: Vec<f64>,
    weights: Weights,
    stats: NormalizationStats,
}

impl SimilarityIndex {
    /// Builds an index from raw vectors. Zero-variance dimensions get std 1.
    pub fn build(vectors: &[FeatureVector]) -> Result<Self> {
        let first = vectors.first().ok_or(IndexError::Empty)?;
        let dim = first.dim();
        let mut seen = BTreeSet::new();
        for v in vectors {
            if v.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if let Some(j) = v.values.iter().position(|x| !x.is_finite()) {
                return Err(IndexError::InvalidValue {
                    id: v.patch_id.clone(),
                    dim: j,
                });
            }
            if !seen.insert(v.patch_id.as_str()) {
                return Err(IndexError::DuplicateId(v.patch_id.clone()));
            }
        }
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(&v.values) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in std.iter_mut().zip(&v.values).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let stats = NormalizationStats { mean, std };
        let data = vectors.iter().flat_map(|v| stats.apply(&v.values)).collect();
        Ok(SimilarityIndex {
            dim,
            ids: vectors.iter().map(|v| v.patch_id.clone()).collect(),
            data,
            weights: Weights::uniform(dim),
            stats,
        })
    }

    pub(crate) fn from_parts(
        dim: usize,
        ids: Vec<String>,
        data: Vec<f64>,
        weights: Weights,
        stats: NormalizationStats,
    ) -> Self {
        SimilarityIndex {
            dim,
            ids,
            data,
            weights,
            stats,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    /// Stored z-scored row.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Stored z-scored vector for `id`.
    pub fn stored_vector(&self, id: &str) -> Result<&[f64]> {
        self.position(id)
            .map(|i| self.row(i))
            .ok_or_else(|| IndexError::UnknownId(id.to_string()))
    }

    /// Same store, different weights.
    pub fn with_weights(&self, weights: Weights) -> Result<Self> {
        if weights.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: weights.len(),
            });
        }
        Ok(SimilarityIndex {
            weights,
            ..self.clone()
        })
    }

    /// Exact top-`k` for a raw (un-normalized) query vector.
    pub fn query(&self, q: &[f64], k: usize) -> Result<RankedList> {
        self.check_dim(q)?;
        let z = self.stats.apply(q);
        self.query_normalized(&z, k, &self.weights)
    }

    /// Exact top-`k` for an already z-scored query under `weights`.
    /// Ties go to the earlier-inserted vector; `k > n` returns everything.
    pub fn query_normalized(&self, z: &[f64], k: usize, weights: &Weights) -> Result<RankedList> {
        let hits = self.nearest_positions(z, k, weights)?;
        Ok(RankedList {
            entries: hits
                .into_iter()
                .map(|(i, d)| (self.ids[i].clone(), d))
                .collect(),
        })
    }

    /// Top-`k` as `(position, distance)` pairs.
    pub(crate) fn nearest_positions(
        &self,
        z: &[f64],
        k: usize,
        weights: &Weights,
    ) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        self.check_dim(z)?;
        self.check_dim(weights.as_slice())?;
        let w = weights.as_slice();
        let mut scored: Vec<(f64, usize)> = self
            .data
            .par_chunks(self.dim * SHARD)
            .enumerate()
            .flat_map_iter(|(shard, chunk)| {
                chunk
                    .chunks_exact(self.dim)
                    .enumerate()
                    .map(move |(i, row)| (squared_distance(z, row, w), shard * SHARD + i))
            })
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect())
    }

    /// Relevance-feedback weights from a positive set: `w_j ∝ 1/(σ_j + ε)`
    /// with σ the population std of the positives in z-space.
    pub fn update_weights(&self, positives: &BTreeSet<usize>, epsilon: f64) -> Result<Weights> {
        if positives.len() < 2 {
            return Err(IndexError::TooFewPositives(positives.len()));
        }
        if let Some(&bad) = positives.iter().find(|&&i| i >= self.len()) {
            return Err(IndexError::UnknownId(format!("#{bad}")));
        }
        let m = positives.len() as f64;
        let raw = (0..self.dim)
            .map(|j| {
                let mean = positives.iter().map(|&i| self.row(i)[j]).sum::<f64>() / m;
                let var = positives
                    .iter()
                    .map(|&i| (self.row(i)[j] - mean).powi(2))
                    .sum::<f64>()
                    / m;
                1.0 / (var.sqrt() + epsilon)
            })
            .collect();
        Ok(Weights::normalized(raw))
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

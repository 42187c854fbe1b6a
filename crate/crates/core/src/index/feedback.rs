use std::collections::BTreeSet;

use super::{RankedList, Result, SimilarityIndex, Weights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackOptions {
    /// Top results folded into the positive set each round.
    pub m_positives: usize,
    pub max_rounds: usize,
    /// Stop once `max_j |Δw_j| / w_j` falls below this.
    pub tol: f64,
    pub epsilon: f64,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        FeedbackOptions {
            m_positives: 50,
            max_rounds: 10,
            tol: 1e-3,
            epsilon: 1e-6,
        }
    }
}

/// Relevance-feedback state owned by a single search.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    /// Index positions treated as positives, accumulated over rounds.
    pub positive_set: BTreeSet<usize>,
    pub round: usize,
    pub weights: Weights,
    pub last_weights: Weights,
    pub converged: bool,
    /// Positive-set size after each round.
    pub positive_counts: Vec<usize>,
}

/// Iterative query refinement.
///
/// Each round queries under the current weights, adds the top
/// `m_positives` hits to the positive set and re-derives the weights from
/// it. Stops on weight stability or after `max_rounds`; the index itself is
/// never modified.
pub fn feedback_search(
    index: &SimilarityIndex,
    q: &[f64],
    k: usize,
    options: &FeedbackOptions,
) -> Result<(RankedList, FeedbackState)> {
    index.check_dim(q)?;
    let z = index.stats.apply(q);
    feedback_search_normalized(index, &z, k, options)
}

/// As [`feedback_search`] for an already z-scored query.
pub fn feedback_search_normalized(
    index: &SimilarityIndex,
    z: &[f64],
    k: usize,
    options: &FeedbackOptions,
) -> Result<(RankedList, FeedbackState)> {
    let mut state = FeedbackState {
        positive_set: BTreeSet::new(),
        round: 0,
        weights: index.weights().clone(),
        last_weights: index.weights().clone(),
        converged: false,
        positive_counts: Vec::new(),
    };
    while state.round < options.max_rounds {
        let hits = index.nearest_positions(z, options.m_positives.max(1), &state.weights)?;
        state.positive_set.extend(hits.into_iter().map(|(pos, _)| pos));
        let next = index.update_weights(&state.positive_set, options.epsilon)?;
        let change = next.max_relative_change(&state.weights);
        state.last_weights = std::mem::replace(&mut state.weights, next);
        state.round += 1;
        state.positive_counts.push(state.positive_set.len());
        if change < options.tol {
            state.converged = true;
            break;
        }
    }
    let ranked = index.query_normalized(z, k, &state.weights)?;
    Ok((ranked, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    #[test]
    fn identical_vectors_converge_in_one_round() {
        let vs: Vec<FeatureVector> = (0..6)
            .map(|i| FeatureVector::new(format!("p{i}"), "w", "x", vec![2.0, 7.0, -1.0]))
            .collect();
        let idx = SimilarityIndex::build(&vs).unwrap();
        let opts = FeedbackOptions {
            m_positives: 3,
            ..Default::default()
        };
        let (r, st) = feedback_search(&idx, &[2.0, 7.0, -1.0], 4, &opts).unwrap();
        assert_eq!(st.round, 1);
        assert!(st.converged);
        assert_eq!(r.len(), 4);
        assert_eq!(st.weights, Weights::uniform(3));
    }

    #[test]
    fn zero_rounds_is_a_plain_query() {
        let vs: Vec<FeatureVector> = (0..8)
            .map(|i| FeatureVector::new(format!("p{i}"), "w", "x", vec![i as f64, (8 - i) as f64 * 0.5]))
            .collect();
        let idx = SimilarityIndex::build(&vs).unwrap();
        let opts = FeedbackOptions {
            max_rounds: 0,
            ..Default::default()
        };
        let (r, st) = feedback_search(&idx, &vs[2].values, 5, &opts).unwrap();
        assert_eq!(r, idx.query(&vs[2].values, 5).unwrap());
        assert_eq!(st.round, 0);
        assert!(st.positive_set.is_empty());
        assert_eq!(&st.weights, idx.weights());
    }

    #[test]
    fn positive_set_grows_monotonically() {
        let vs: Vec<FeatureVector> = (0..40)
            .map(|i| {
                let x = i as f64;
                FeatureVector::new(format!("p{i}"), "w", "x", vec![x.sin(), (x * 0.3).cos(), x % 7.0])
            })
            .collect();
        let idx = SimilarityIndex::build(&vs).unwrap();
        let opts = FeedbackOptions {
            m_positives: 5,
            max_rounds: 6,
            tol: 1e-12,
            epsilon: 1e-6,
        };
        let (_, st) = feedback_search(&idx, &vs[0].values, 10, &opts).unwrap();
        assert!(st.round <= 6);
        assert!(st.positive_counts.windows(2).all(|w| w[0] <= w[1]));
        let sum: f64 = st.weights.as_slice().iter().sum();
        assert!((sum - 3.0).abs() < 1e-9);
    }
}

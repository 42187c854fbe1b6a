use histoprog::features::{quantize, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
use histoprog::index::{feedback_search, fuse_rankings, weighted_distance, FeedbackOptions, RankedList, SimilarityIndex};
use histoprog::ingest::{features_to_csv, parse_features};
use histoprog::survival::{cox_loglik, km_estimate, SurvivalDataset};
use proptest::prelude::*;

fn survival_data() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<Vec<f64>>)> {
    (2usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..30, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
        )
            .prop_map(|(t, e, x)| (t.into_iter().map(f64::from).collect(), e, x))
    })
}

fn dataset(times: Vec<f64>, events: Vec<bool>, rows: &[Vec<f64>]) -> SurvivalDataset {
    let ids = (0..times.len()).map(|i| i.to_string()).collect();
    SurvivalDataset::new(ids, times, events, vec!["a".into(), "b".into()], rows).unwrap()
}

proptest! {
    #[test]
    fn distance_is_a_weighted_euclidean_metric(
        a in prop::collection::vec(-50.0f64..50.0, 6),
        b in prop::collection::vec(-50.0f64..50.0, 6),
        w in prop::collection::vec(0.0f64..4.0, 6),
    ) {
        let d = weighted_distance(&a, &b, &w).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, weighted_distance(&b, &a, &w).unwrap());
        prop_assert_eq!(weighted_distance(&a, &a, &w).unwrap(), 0.0);
        let euclid = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let ones = vec![1.0; 6];
        prop_assert!((weighted_distance(&a, &b, &ones).unwrap() - euclid).abs() <= 1e-12 * euclid.max(1.0));
    }

    #[test]
    fn km_is_a_non_increasing_probability((times, events, rows) in survival_data()) {
        let ds = dataset(times, events, &rows);
        let c = km_estimate(&ds, &vec![true; ds.n()]).unwrap();
        prop_assert!(c.survival.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(c.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.at_risk.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(c.greenwood_var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn loglik_is_non_positive_and_order_free(
        (times, events, rows) in survival_data(),
        beta in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let ds = dataset(times.clone(), events.clone(), &rows);
        let l = cox_loglik(&ds, &beta).unwrap();
        prop_assert!(l <= 1e-12);
        let n = times.len();
        let rev: Vec<usize> = (0..n).rev().collect();
        let flipped = dataset(
            rev.iter().map(|&i| times[i]).collect(),
            rev.iter().map(|&i| events[i]).collect(),
            &rev.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>(),
        );
        let l2 = cox_loglik(&flipped, &beta).unwrap();
        prop_assert!((l - l2).abs() <= 1e-10 * l.abs().max(1.0));
    }

    #[test]
    fn quantized_bins_stay_in_range(grays in prop::collection::vec(any::<u8>(), 1..200), levels in 2usize..64) {
        let bins = quantize(&grays, levels);
        prop_assert!(bins.iter().all(|&b| b < levels));
        let lo = *grays.iter().min().unwrap();
        let hi = *grays.iter().max().unwrap();
        for (g, b) in grays.iter().zip(&bins) {
            if *g == lo {
                prop_assert_eq!(*b, 0);
            }
            if *g == hi && hi > lo {
                prop_assert_eq!(*b, levels - 1);
            }
        }
    }

    #[test]
    fn feature_csv_round_trips_exactly(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, FEATURE_DIM), 1..5)) {
        let vectors: Vec<FeatureVector> = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| FeatureVector::new(format!("p{i}"), "w", "x", v))
            .collect();
        let csv = features_to_csv(&vectors, &FEATURE_NAMES).unwrap();
        prop_assert_eq!(parse_features(csv.as_bytes()).unwrap(), vectors);
    }

    #[test]
    fn single_list_fusion_keeps_order(n in 1usize..40, k in 1usize..50) {
        let list = RankedList {
            entries: (0..n).map(|i| (format!("id{i}"), i as f64)).collect(),
        };
        let fused = fuse_rankings(std::slice::from_ref(&list), k);
        let expected: Vec<&str> = list.ids().take(k).collect();
        prop_assert_eq!(fused.ids().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn feedback_keeps_weights_normalized(seed in 0u64..1000, m in 2usize..10, rounds in 0usize..6) {
        let vectors: Vec<FeatureVector> = (0..30)
            .map(|i| {
                let x = (i as f64 + seed as f64 * 0.37).sin();
                FeatureVector::new(format!("v{i}"), "w", "p", vec![x, x * x, (i % 5) as f64, (seed % 7) as f64 + i as f64])
            })
            .collect();
        let index = SimilarityIndex::build(&vectors).unwrap();
        let options = FeedbackOptions { m_positives: m, max_rounds: rounds, ..Default::default() };
        let (ranked, state) = feedback_search(&index, &vectors[0].values, 10, &options).unwrap();
        prop_assert_eq!(ranked.len(), 10);
        prop_assert!(state.round <= rounds);
        prop_assert!(state.positive_counts.windows(2).all(|w| w[0] <= w[1]));
        let sum: f64 = state.weights.as_slice().iter().sum();
        prop_assert!((sum - 4.0).abs() < 1e-9);
        prop_assert!(state.weights.as_slice().iter().all(|w| *w > 0.0));
    }
}

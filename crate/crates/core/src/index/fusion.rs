use std::collections::HashMap;

use super::RankedList;

/// Rank offset in the reciprocal-rank score.
pub const RRF_CONSTANT: f64 = 60.0;

/// Reciprocal-rank fusion of several ranked lists.
///
/// `score(id) = Σ 1 / (60 + rank)` over the lists containing `id`, ranks
/// 1-based. The top `k` ids by descending score are returned with `-score`
/// in the distance slot; equal scores keep first-seen order.
pub fn fuse_rankings(lists: &[RankedList], k: usize) -> RankedList {
    let mut order: Vec<&str> = Vec::new();
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for list in lists {
        for (rank, id) in list.ids().enumerate() {
            let s = 1.0 / (RRF_CONSTANT + (rank + 1) as f64);
            match scores.get_mut(id) {
                Some(total) => *total += s,
                None => {
                    scores.insert(id, s);
                    order.push(id);
                }
            }
        }
    }
    let mut ranked: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .map(|(i, id)| (i, scores[id]))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    RankedList {
        entries: ranked
            .into_iter()
            .map(|(i, s)| (order[i].to_string(), -s))
            .collect(),
    }
}

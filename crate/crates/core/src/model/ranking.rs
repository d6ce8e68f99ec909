use super::forward::PredictionDistribution;
use crate::error::{Error, Result};

/// Top `k` items by descending probability, ties broken by ascending item id.
pub fn recommend_topk(pred: &PredictionDistribution, k: usize) -> Result<Vec<(usize, f64)>> {
    let m = pred.len();
    if k == 0 || k > m {
        return Err(Error::config("k", format!("must lie in 1..={m}, got {k}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let by_rank = |a: &usize, b: &usize| {
        pred.probs[*b]
            .total_cmp(&pred.probs[*a])
            .then_with(|| a.cmp(b))
    };
    if k < m {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_unstable_by(by_rank);
    Ok(order.into_iter().map(|i| (i, pred.probs[i])).collect())
}

/// 1-based rank of `target` under the same ordering as [`recommend_topk`].
pub fn target_rank(pred: &PredictionDistribution, target: usize) -> usize {
    let p = pred.probs[target];
    1 + pred
        .probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < target))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(probs: Vec<f64>) -> PredictionDistribution {
        PredictionDistribution {
            scores: probs.clone(),
            probs,
        }
    }

    #[test]
    fn sorts_by_probability() {
        let top = recommend_topk(&pred(vec![0.1, 0.7, 0.2]), 2).unwrap();
        assert_eq!(top, vec![(1, 0.7), (2, 0.2)]);
    }

    #[test]
    fn ties_go_to_lower_ids() {
        let top = recommend_topk(&pred(vec![0.25; 4]), 3).unwrap();
        let ids: Vec<usize> = top.iter().map(|x| x.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn full_catalog_is_a_permutation() {
        let top = recommend_topk(&pred(vec![0.3, 0.1, 0.4, 0.2]), 4).unwrap();
        let mut ids: Vec<usize> = top.iter().map(|x| x.0).collect();
        assert_eq!(ids, vec![2, 0, 3, 1]);
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_larger_than_catalog_fails() {
        assert!(recommend_topk(&pred(vec![0.5, 0.5]), 3).is_err());
    }

    proptest! {
        #[test]
        fn rank_agrees_with_topk(raw in proptest::collection::vec(0u8..5, 1..30)) {
            let total: f64 = raw.iter().map(|&x| f64::from(x) + 1.0).sum();
            let p = pred(raw.iter().map(|&x| (f64::from(x) + 1.0) / total).collect());
            let full = recommend_topk(&p, p.len()).unwrap();
            for (pos, (item, _)) in full.iter().enumerate() {
                prop_assert_eq!(target_rank(&p, *item), pos + 1);
            }
        }
    }
}

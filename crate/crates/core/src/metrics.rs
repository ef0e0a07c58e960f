use crate::knn::NeighborList;

/// Fraction of the true neighbors present in `result`.
///
/// Duplicates in `result` are harmless; each true neighbor counts once.
pub fn recall(result: &[u32], truth: &NeighborList) -> f64 {
    let k = truth.len();
    if k == 0 {
        return 0.0;
    }
    let hits = truth.indices.iter().filter(|j| result.contains(j)).count();
    hits as f64 / k as f64
}

/// Mean of `recall` over paired results and truths.
pub fn mean_recall<R: AsRef<[u32]>>(results: &[R], truth: &[NeighborList]) -> f64 {
    assert_eq!(results.len(), truth.len());
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .zip(truth)
        .map(|(r, t)| recall(r.as_ref(), t))
        .sum::<f64>()
        / results.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nl(idx: &[u32]) -> NeighborList {
        NeighborList {
            indices: idx.to_vec(),
            dissimilarities: (0..idx.len()).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn examples() {
        let t: Vec<u32> = (0..10).collect();
        assert_eq!(recall(&t, &nl(&t)), 1.0);
        assert_eq!(recall(&[], &nl(&t)), 0.0);
        assert_eq!(recall(&[2, 4, 9, 11], &nl(&[1, 2, 3, 4, 5])), 0.4);
    }

    proptest! {
        #[test]
        fn monotone_under_supersets(
            truth in proptest::collection::hash_set(0u32..50, 1..10),
            base in proptest::collection::vec(0u32..50, 0..20),
            extra in proptest::collection::vec(0u32..50, 0..20),
        ) {
            let truth: Vec<u32> = truth.into_iter().collect();
            let t = nl(&truth);
            let mut bigger = base.clone();
            bigger.extend(extra);
            prop_assert!(recall(&bigger, &t) >= recall(&base, &t));
            prop_assert!((0.0..=1.0).contains(&recall(&bigger, &t)));
        }
    }
}

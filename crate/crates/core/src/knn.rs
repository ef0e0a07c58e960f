//! Dissimilarity, exact k-nearest-neighbor search and the label sets it yields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Squared Euclidean distance, accumulated in `f64`.
///
/// Squared distance orders points the same way as the Euclidean distance;
/// take a square root only when reporting.
pub fn dissimilarity<T: Scalar>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(sq_dist(u, v))
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(u: &[T], v: &[T]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    // independent lanes so the loop vectorizes
    let mut acc = [0.0f64; 8];
    let cu = u.chunks_exact(8);
    let cv = v.chunks_exact(8);
    let (ru, rv) = (cu.remainder(), cv.remainder());
    for (a, b) in cu.zip(cv) {
        for l in 0..8 {
            let t = a[l].as_f64() - b[l].as_f64();
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (a, b) in ru.iter().zip(rv) {
        let t = a.as_f64() - b.as_f64();
        tail += t * t;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub(crate) fn dot<T: Scalar>(u: &[T], v: &[T]) -> f64 {
    let mut acc = [0.0f64; 4];
    let cu = u.chunks_exact(4);
    let cv = v.chunks_exact(4);
    let (ru, rv) = (cu.remainder(), cv.remainder());
    for (a, b) in cu.zip(cv) {
        for l in 0..4 {
            acc[l] += a[l].as_f64() * b[l].as_f64();
        }
    }
    let mut tail = 0.0;
    for (a, b) in ru.iter().zip(rv) {
        tail += a.as_f64() * b.as_f64();
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// The k nearest corpus points of one point, nearest first.
///
/// `dissimilarities` are squared distances; see [`NeighborList::distances`].
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    pub indices: Vec<u32>,
    pub dissimilarities: Vec<f64>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Euclidean distances.
    pub fn distances(&self) -> Vec<f64> {
        self.dissimilarities.iter().map(|d| d.sqrt()).collect()
    }

    pub fn contains(&self, j: u32) -> bool {
        self.indices.contains(&j)
    }
}

/// Nearest-neighbor labels for a set of points: point `i` has label `j`
/// exactly when `j` is among its k nearest corpus points.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub k: usize,
    pub rows: Vec<NeighborList>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self, i: usize) -> &[u32] {
        &self.rows[i].indices
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &GroundTruth) -> Result<GroundTruth> {
        if self.k != other.k {
            return Err(Error::usage("cannot concatenate ground truths of different k"));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(GroundTruth { k: self.k, rows })
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.rows.len() != n {
            return Err(Error::usage(format!(
                "ground truth has {} rows for {n} points",
                self.rows.len()
            )));
        }
        if self.k == 0 {
            return Err(Error::usage("ground truth has k = 0"));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != self.k) {
            return Err(Error::usage(format!(
                "ground truth row {i} has {} labels, expected {}",
                self.rows[i].len(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Exact k nearest neighbors of every query; ties go to the lower corpus index.
pub fn exact_knn<T: Scalar>(
    corpus: &VectorSet<T>,
    queries: &VectorSet<T>,
    k: usize,
) -> Result<GroundTruth> {
    check_knn_args(corpus, queries.dim(), k)?;
    let rows = (0..queries.len())
        .into_par_iter()
        .map(|i| knn_one(corpus, queries.row(i), k, None))
        .collect();
    Ok(GroundTruth { k, rows })
}

/// Labels for the corpus used as its own training set.
///
/// Identical to `exact_knn(corpus, corpus, k)` except that each point is
/// its own first neighbor even when it has exact duplicates.
pub fn exact_knn_self<T: Scalar>(corpus: &VectorSet<T>, k: usize) -> Result<GroundTruth> {
    check_knn_args(corpus, corpus.dim(), k)?;
    let rows = (0..corpus.len())
        .into_par_iter()
        .map(|i| knn_one(corpus, corpus.row(i), k, Some(i as u32)))
        .collect();
    Ok(GroundTruth { k, rows })
}

/// Exact k nearest neighbors of `x` among the listed corpus points.
pub fn knn_among<T: Scalar>(
    corpus: &VectorSet<T>,
    candidates: &[u32],
    x: &[T],
    k: usize,
) -> NeighborList {
    let mut scored: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&j| (sq_dist(x, corpus.row(j as usize)), j))
        .collect();
    let k = k.min(scored.len());
    if k == 0 {
        return NeighborList {
            indices: Vec::new(),
            dissimilarities: Vec::new(),
        };
    }
    let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    NeighborList {
        indices: scored.iter().map(|s| s.1).collect(),
        dissimilarities: scored.iter().map(|s| s.0).collect(),
    }
}

fn check_knn_args<T: Scalar>(corpus: &VectorSet<T>, d: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    if k > corpus.len() {
        return Err(Error::usage(format!(
            "k = {k} exceeds corpus size {}",
            corpus.len()
        )));
    }
    if d != corpus.dim() {
        return Err(Error::usage(format!(
            "query dimension {d} does not match corpus dimension {}",
            corpus.dim()
        )));
    }
    Ok(())
}

// Sort key: (distance, not-preferred, index). `preferred` wins every tie.
fn knn_one<T: Scalar>(corpus: &VectorSet<T>, x: &[T], k: usize, preferred: Option<u32>) -> NeighborList {
    let key = |d: f64, j: u32| (d, (Some(j) != preferred) as u8, j);
    let less = |a: &(f64, u8, u32), b: &(f64, u8, u32)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
    };
    // sorted ascending, bounded to k
    let mut best: Vec<(f64, u8, u32)> = Vec::with_capacity(k + 1);
    for (j, c) in corpus.rows().enumerate() {
        let d = sq_dist(x, c);
        let cand = key(d, j as u32);
        if best.len() == k && !less(&cand, &best[k - 1]) {
            continue;
        }
        let pos = best.partition_point(|b| less(b, &cand));
        best.insert(pos, cand);
        best.truncate(k);
    }
    NeighborList {
        indices: best.iter().map(|b| b.2).collect(),
        dissimilarities: best.iter().map(|b| b.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, d: usize, seed: u64) -> VectorSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorSet::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dissimilarity_examples() {
        let d = dissimilarity(&[0.0f32, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(d, 25.0);
        assert_eq!(d.sqrt(), 5.0);
        assert_eq!(dissimilarity(&[1.0f64, 2.0, 3.0], &[4.0, 6.0, 3.0]).unwrap(), 25.0);
        let u = [0.3f32, -7.0, 2.5, 1e3, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(dissimilarity(&u, &u).unwrap(), 0.0);
        assert!(matches!(
            dissimilarity(&[1.0f32], &[1.0, 2.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn one_dimensional_neighbors() {
        let corpus = VectorSet::<f32>::new(1, vec![0.0, 1.0, 10.0]).unwrap();
        let q = VectorSet::<f32>::new(1, vec![0.4]).unwrap();
        let gt = exact_knn(&corpus, &q, 2).unwrap();
        assert_eq!(gt.rows[0].indices, vec![0, 1]);
    }

    #[test]
    fn corpus_point_is_its_own_neighbor() {
        let corpus = random_set(20, 4, 3);
        let q = corpus.select(&[5]).unwrap();
        assert_eq!(exact_knn(&corpus, &q, 1).unwrap().rows[0].indices, vec![5]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let corpus = VectorSet::<f32>::new(1, vec![2.0, -1.0, 1.0, -1.0]).unwrap();
        let q = VectorSet::<f32>::new(1, vec![0.0]).unwrap();
        let gt = exact_knn(&corpus, &q, 3).unwrap();
        assert_eq!(gt.rows[0].indices, vec![1, 2, 3]);
    }

    #[test]
    fn self_labels_put_self_first_among_duplicates() {
        let corpus = VectorSet::<f32>::new(1, vec![1.0, 1.0, 5.0]).unwrap();
        let gt = exact_knn_self(&corpus, 2).unwrap();
        assert_eq!(gt.rows[0].indices, vec![0, 1]);
        assert_eq!(gt.rows[1].indices, vec![1, 0]);
        assert_eq!(exact_knn(&corpus, &corpus, 2).unwrap().rows[1].indices, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_k_and_dims() {
        let corpus = random_set(5, 2, 0);
        let q = random_set(2, 3, 1);
        assert!(exact_knn(&corpus, &corpus, 6).is_err());
        assert!(exact_knn(&corpus, &corpus, 0).is_err());
        assert!(exact_knn(&corpus, &q, 1).is_err());
    }

    // independent O(nm) oracle: full sort of every distance
    fn brute_force(corpus: &VectorSet<f32>, x: &[f32], k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = (0..corpus.len())
            .map(|j| {
                let d: f64 = x
                    .iter()
                    .zip(corpus.row(j))
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum();
                (d, j as u32)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|p| p.1).collect()
    }

    #[test]
    fn matches_double_loop_oracle() {
        let corpus = random_set(100, 8, 11);
        let queries = random_set(10, 8, 12);
        let gt = exact_knn(&corpus, &queries, 10).unwrap();
        for i in 0..queries.len() {
            assert_eq!(gt.rows[i].indices, brute_force(&corpus, queries.row(i), 10));
            assert!(gt.rows[i].dissimilarities.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn knn_among_restricts() {
        let corpus = VectorSet::<f32>::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let nl = knn_among(&corpus, &[3, 1, 2], &[0.0], 2);
        assert_eq!(nl.indices, vec![1, 2]);
        assert!(knn_among(&corpus, &[], &[0.0], 2).is_empty());
        assert_eq!(knn_among(&corpus, &[3], &[0.0], 2).indices, vec![3]);
    }

    proptest! {
        #[test]
        fn permutation_equivariant(seed in 0u64..1000, k in 1usize..6) {
            let corpus = random_set(30, 3, seed);
            let queries = random_set(4, 3, seed + 1);
            let mut perm: Vec<usize> = (0..30).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted = corpus.select(&perm).unwrap();
            let a = exact_knn(&corpus, &queries, k).unwrap();
            let b = exact_knn(&permuted, &queries, k).unwrap();
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                let mapped: Vec<u32> = rb.indices.iter().map(|&j| perm[j as usize] as u32).collect();
                prop_assert_eq!(&ra.indices, &mapped);
            }
        }
    }
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{grow_tree, median_rule, rng_for, PartitionTree, SplitRule, Splitter, TreeBuildParams, TreeParts};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Random projection tree: median splits along standard-normal directions.
///
/// All nodes at one depth share a direction, so routing a query costs one
/// projection per level.
pub fn build_rp_tree<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> Result<PartitionTree<T>> {
    params.validate(points.dim())?;
    Ok(grow(points, params).0)
}

pub(super) fn grow<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> (PartitionTree<T>, Vec<u32>) {
    let splitter = RpSplitter {
        rng: rng_for(params),
        level_dirs: Vec::new(),
    };
    grow_tree(points, params, splitter)
}

struct RpSplitter {
    rng: ChaCha8Rng,
    level_dirs: Vec<u32>,
}

impl<T: Scalar> Splitter<T> for RpSplitter {
    fn split(&mut self, points: &VectorSet<T>, members: &[u32], depth: usize, parts: &mut TreeParts<T>) -> Option<SplitRule> {
        while self.level_dirs.len() <= depth {
            let dir: Vec<f64> = (0..parts.d).map(|_| self.rng.sample(StandardNormal)).collect();
            let idx = parts.push_direction(&dir);
            self.level_dirs.push(idx);
        }
        let rule = SplitRule::Direction {
            direction: self.level_dirs[depth],
            threshold: 0.0,
        };
        median_rule(parts, points, members, rule)
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{Node, TreeType};
    use super::*;

    fn params(leaf: usize, seed: u64) -> TreeBuildParams {
        TreeBuildParams {
            tree_type: TreeType::Rp,
            max_leaf_size: leaf,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn thousand_points_give_sixteen_balanced_leaves() {
        let pts = uniform(1000, 8, 4);
        let (tree, assign) = grow(&pts, &params(100, 1));
        assert_eq!(tree.n_leaves(), 16);
        assert_eq!(tree.max_depth(), 4);
        let sizes = leaf_sizes(&assign, 16);
        assert!(sizes.iter().all(|&s| s == 62 || s == 63), "{sizes:?}");
    }

    #[test]
    fn small_input_is_single_leaf() {
        let pts = uniform(100, 8, 4);
        assert_eq!(build_rp_tree(&pts, &params(100, 1)).unwrap().n_leaves(), 1);
    }

    #[test]
    fn one_direction_per_level() {
        let pts = uniform(1000, 8, 4);
        let tree = build_rp_tree(&pts, &params(100, 1)).unwrap();
        assert_eq!(tree.directions.len(), 4 * 8);
        for n in &tree.nodes {
            if let Node::Split { rule: SplitRule::Direction { direction, .. }, .. } = n {
                assert!((*direction as usize) < 4);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = uniform(1000, 8, 4);
        let a = build_rp_tree(&pts, &params(50, 7)).unwrap();
        let b = build_rp_tree(&pts, &params(50, 7)).unwrap();
        let c = build_rp_tree(&pts, &params(50, 8)).unwrap();
        assert_eq!(a, b);
        let queries = uniform(100, 8, 5);
        let ra: Vec<usize> = queries.rows().map(|q| a.route(q)).collect();
        let rb: Vec<usize> = queries.rows().map(|q| b.route(q)).collect();
        assert_eq!(ra, rb);
        assert_ne!(a.directions, c.directions);
    }
}

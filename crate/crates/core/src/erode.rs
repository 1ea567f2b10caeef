//! Pruning of childless high-heuristic nodes between iterations.

use log::{debug, warn};

use crate::error::Result;
use crate::tree::{BranchTree, NodeId};

/// Shrink every depth of `tree` towards `target_width`, deepest depth first.
///
/// At each depth the nodes are visited once in descending `rho` (ties: newer node
/// first) and childless ones are removed until the width reaches `target_width`. The
/// node with the smallest `rho` is never removed. Depths that run out of childless
/// candidates keep their surplus. Nodes missing from `heuristics[depth]` are never
/// removed. Returns the removal count per depth.
pub fn erode(
    tree: &mut BranchTree,
    heuristics: &[Vec<(NodeId, f64)>],
    target_width: usize,
) -> Result<Vec<usize>> {
    let steps = tree.steps();
    let mut removed = vec![0; steps + 1];
    for depth in (1..=steps).rev() {
        if tree.width(depth) <= target_width {
            continue;
        }
        let mut order: Vec<(f64, u64, NodeId)> = heuristics
            .get(depth)
            .map(|h| h.as_slice())
            .unwrap_or_default()
            .iter()
            .filter_map(|&(id, rho)| tree.node(id).map(|n| (rho, n.serial, id)))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        // the minimum-rho node is always kept
        order.pop();
        for (_, _, id) in order {
            if tree.width(depth) <= target_width {
                break;
            }
            if tree.node(id).is_some_and(|n| n.child_count == 0) {
                tree.remove_leaf(id)?;
                removed[depth] += 1;
            }
        }
        if tree.width(depth) > target_width {
            warn!(
                "erode: depth {depth} kept {} nodes, {} above target",
                tree.width(depth),
                tree.width(depth) - target_width
            );
        }
        debug!("erode: removed {} nodes at depth {depth}", removed[depth]);
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{parallel_forward_pass, Roi};
    use crate::problem::make_double_integrator;
    use crate::rng::Streams;
    use crate::tree::EdgeData;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn edge() -> EdgeData {
        EdgeData {
            drift: DVector::zeros(1),
            noise: DVector::zeros(1),
            control: DVector::zeros(1),
        }
    }

    /// Random tree of the given depth and width with random heuristics.
    fn random_tree(seed: u64, steps: usize, width: usize) -> (BranchTree, Vec<Vec<(NodeId, f64)>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = BranchTree::new(DVector::zeros(1), steps, 0.1);
        for d in 0..steps {
            for _ in 0..width {
                let j = rng.random_range(0..tree.width(d));
                let parent = tree.id_at(d, j).unwrap();
                tree.add_edge(d, parent, edge(), DVector::zeros(1), 0.0)
                    .unwrap();
            }
        }
        let h = (0..=steps)
            .map(|d| {
                if d == 0 {
                    Vec::new()
                } else {
                    tree.ids_at(d)
                        .map(|id| (id, rng.random_range(0.0..10.0)))
                        .collect()
                }
            })
            .collect();
        (tree, h)
    }

    #[test]
    fn equal_target_removes_nothing() {
        let (mut tree, h) = random_tree(1, 4, 10);
        let before = tree.widths();
        let removed = erode(&mut tree, &h, 10).unwrap();
        assert_eq!(removed.iter().sum::<usize>(), 0);
        assert_eq!(tree.widths(), before);
    }

    #[test]
    fn deepest_depth_always_reaches_target() {
        let (mut tree, h) = random_tree(2, 5, 20);
        erode(&mut tree, &h, 7).unwrap();
        assert_eq!(tree.width(5), 7);
        for d in 1..=5 {
            assert!(tree.width(d) >= 7);
        }
    }

    #[test]
    fn chain_tree_cascades() {
        let p = make_double_integrator();
        let mut tree = parallel_forward_pass(
            &p,
            None,
            &Roi::new(
                DVector::from_vec(vec![-6.0, -4.0]),
                DVector::from_vec(vec![6.0, 4.0]),
            )
            .unwrap(),
            16,
            6,
            Streams::new(1),
        )
        .unwrap();
        let h: Vec<Vec<(NodeId, f64)>> = (0..=6)
            .map(|d| {
                tree.nodes_at(d)
                    .map(|(id, n)| (id, n.state[0] + n.state[1]))
                    .collect()
            })
            .collect();
        // leaves ordered by rho decide which chains are dropped; the parents of
        // removed leaves become childless and go next, so every depth hits the target
        let removed = erode(&mut tree, &h, 8).unwrap();
        assert_eq!(&tree.widths()[1..], &[8; 6]);
        assert_eq!(&removed[1..], &[8; 6]);
    }

    #[test]
    fn parents_with_children_survive() {
        // depth 1: a (rho 9, has child), b (rho 5, childless), c (rho 1, childless)
        let mut tree = BranchTree::new(DVector::zeros(1), 2, 0.1);
        let r = tree.root();
        let a = tree.add_edge(0, r, edge(), DVector::zeros(1), 0.0).unwrap();
        let b = tree.add_edge(0, r, edge(), DVector::zeros(1), 0.0).unwrap();
        let c = tree.add_edge(0, r, edge(), DVector::zeros(1), 0.0).unwrap();
        let leaf = tree.add_edge(1, a, edge(), DVector::zeros(1), 0.0).unwrap();
        let h = vec![
            vec![],
            vec![(a, 9.0), (b, 5.0), (c, 1.0)],
            vec![(leaf, 0.0)],
        ];
        erode(&mut tree, &h, 1).unwrap();
        // a has a child and c holds the minimum, so only b can go
        assert!(tree.node(a).is_some());
        assert!(tree.node(b).is_none());
        assert!(tree.node(c).is_some());
        assert_eq!(tree.width(1), 2);
    }

    #[test]
    fn deficit_is_left_in_place() {
        let mut tree = BranchTree::new(DVector::zeros(1), 2, 0.1);
        let r = tree.root();
        let a = tree.add_edge(0, r, edge(), DVector::zeros(1), 0.0).unwrap();
        let b = tree.add_edge(0, r, edge(), DVector::zeros(1), 0.0).unwrap();
        let la = tree.add_edge(1, a, edge(), DVector::zeros(1), 0.0).unwrap();
        let lb = tree.add_edge(1, b, edge(), DVector::zeros(1), 0.0).unwrap();
        let h = vec![vec![], vec![(a, 1.0), (b, 2.0)], vec![(la, 0.0), (lb, 0.0)]];
        erode(&mut tree, &h, 2).unwrap();
        // depth 2 is already at target, so nothing frees depth 1
        assert_eq!(tree.widths(), vec![1, 2, 2]);
        erode(&mut tree, &h, 1).unwrap();
        // the newer leaf goes first on the tie, which frees b (the higher rho)
        assert!(tree.node(lb).is_none());
        assert!(tree.node(b).is_none());
        assert_eq!(tree.widths(), vec![1, 1, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn erode_invariants(seed in any::<u64>(), width in 2usize..30, target in 1usize..30) {
            let target = target.min(width);
            let (mut tree, h) = random_tree(seed, 4, width);
            let min_ids: Vec<Option<NodeId>> = h
                .iter()
                .map(|level| level.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|x| x.0))
                .collect();
            erode(&mut tree, &h, target).unwrap();
            prop_assert_eq!(tree.width(4), target);
            for d in 1..=4 {
                prop_assert!(tree.width(d) >= target);
                if let Some(id) = min_ids[d] {
                    prop_assert!(tree.node(id).is_some(), "min-rho node removed at depth {}", d);
                }
                for (_, n) in tree.nodes_at(d) {
                    prop_assert!(tree.node(n.parent.unwrap()).is_some());
                }
            }
            for d in 0..4 {
                for (id, n) in tree.nodes_at(d) {
                    let kids = tree.nodes_at(d + 1).filter(|(_, c)| c.parent == Some(id)).count();
                    prop_assert_eq!(kids, n.child_count);
                }
            }
        }
    }
}

//! Branched sample tree.
//!
//! Nodes live in per-depth arenas addressed by stable [`NodeId`] handles; removing a
//! node never moves another. Each node at depth `i` is the end point of exactly one
//! root-to-node path, so the set of nodes at a depth doubles as the empirical path
//! measure for that time step.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    depth: u32,
    slot: u32,
}

impl NodeId {
    pub fn depth(&self) -> usize {
        self.depth as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.depth, self.slot)
    }
}

/// Data carried by the edge into a node.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeData {
    /// Sampling drift `k_i`.
    pub drift: DVector<f64>,
    /// Brownian increment `w_i ~ N(0, dt I)`.
    pub noise: DVector<f64>,
    /// Control that produced the drift.
    pub control: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Creation order, unique over the lifetime of the tree.
    pub serial: u64,
    pub depth: usize,
    pub state: DVector<f64>,
    pub parent: Option<NodeId>,
    pub edge: Option<EdgeData>,
    /// Running cost integrated along the path up to this node.
    pub accumulated_cost: f64,
    pub child_count: usize,
}

#[derive(Clone, Debug, Default)]
struct Level {
    slots: Vec<Option<TreeNode>>,
    // live slots in insertion order
    live: Vec<u32>,
}

/// The last edge of a root-to-node path, which is all the backward pass consumes.
#[derive(Clone, Copy, Debug)]
pub struct PathSample<'a> {
    pub node: NodeId,
    pub serial: u64,
    /// `x_{i-1}`, absent for the root path.
    pub parent_state: Option<&'a DVector<f64>>,
    pub edge: Option<&'a EdgeData>,
    /// `x_i`
    pub state: &'a DVector<f64>,
    /// Running cost over `[0, t_i]`.
    pub accumulated_cost: f64,
}

#[derive(Clone, Debug)]
pub struct BranchTree {
    levels: Vec<Level>,
    dt: f64,
    next_serial: u64,
}

impl BranchTree {
    /// Tree holding only the root `x0`, with depths `0..=steps`.
    pub fn new(root_state: DVector<f64>, steps: usize, dt: f64) -> Self {
        let mut levels = vec![Level::default(); steps + 1];
        levels[0].slots.push(Some(TreeNode {
            serial: 0,
            depth: 0,
            state: root_state,
            parent: None,
            edge: None,
            accumulated_cost: 0.0,
            child_count: 0,
        }));
        levels[0].live.push(0);
        Self {
            levels,
            dt,
            next_serial: 1,
        }
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn root(&self) -> NodeId {
        NodeId { depth: 0, slot: 0 }
    }

    pub fn width(&self, depth: usize) -> usize {
        self.levels.get(depth).map_or(0, |l| l.live.len())
    }

    pub fn widths(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.live.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.live.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.levels
            .get(id.depth as usize)?
            .slots
            .get(id.slot as usize)?
            .as_ref()
    }

    fn node_or_err(&self, id: NodeId) -> Result<&TreeNode> {
        self.node(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Live node handles at `depth` in insertion order.
    pub fn ids_at(&self, depth: usize) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        let live: &[u32] = self.levels.get(depth).map_or(&[], |l| l.live.as_slice());
        live.iter().map(move |&slot| NodeId {
            depth: depth as u32,
            slot,
        })
    }

    pub fn nodes_at(
        &self,
        depth: usize,
    ) -> impl ExactSizeIterator<Item = (NodeId, &TreeNode)> + '_ {
        self.ids_at(depth).map(move |id| {
            let node = self.levels[id.depth as usize].slots[id.slot as usize]
                .as_ref()
                .expect("live slot holds a node");
            (id, node)
        })
    }

    /// Handle of the `index`-th live node at `depth` (insertion order).
    pub fn id_at(&self, depth: usize, index: usize) -> Option<NodeId> {
        let slot = *self.levels.get(depth)?.live.get(index)?;
        Some(NodeId {
            depth: depth as u32,
            slot,
        })
    }

    /// Attach a child below `parent` (which must sit at `depth`).
    ///
    /// `running_cost` is the instantaneous cost `l(t_depth, x_parent, u)`; the child's
    /// accumulated cost is the parent's plus `running_cost * dt`.
    pub fn add_edge(
        &mut self,
        depth: usize,
        parent: NodeId,
        edge: EdgeData,
        child_state: DVector<f64>,
        running_cost: f64,
    ) -> Result<NodeId> {
        if depth >= self.steps() {
            return Err(Error::DepthOverflow {
                depth,
                steps: self.steps(),
            });
        }
        if parent.depth() != depth {
            return Err(Error::UnknownNode(format!("{parent} at depth {depth}")));
        }
        let parent_cost = self.node_or_err(parent)?.accumulated_cost;
        let level = &mut self.levels[depth + 1];
        let slot = level.slots.len() as u32;
        level.slots.push(Some(TreeNode {
            serial: self.next_serial,
            depth: depth + 1,
            state: child_state,
            parent: Some(parent),
            edge: Some(edge),
            accumulated_cost: parent_cost + running_cost * self.dt,
            child_count: 0,
        }));
        level.live.push(slot);
        self.next_serial += 1;
        self.levels[depth].slots[parent.slot as usize]
            .as_mut()
            .expect("parent checked above")
            .child_count += 1;
        Ok(NodeId {
            depth: depth as u32 + 1,
            slot,
        })
    }

    /// Remove a childless node together with its parent edge.
    pub fn remove_leaf(&mut self, id: NodeId) -> Result<()> {
        let node = self.node_or_err(id)?;
        if node.child_count > 0 {
            return Err(Error::HasChildren(id.to_string()));
        }
        let parent = node
            .parent
            .ok_or_else(|| Error::HasChildren(format!("root {id}")))?;
        let level = &mut self.levels[id.depth as usize];
        level.slots[id.slot as usize] = None;
        if let Some(pos) = level.live.iter().position(|&s| s == id.slot) {
            level.live.remove(pos);
        }
        self.levels[parent.depth as usize].slots[parent.slot as usize]
            .as_mut()
            .expect("parent of a live node is live")
            .child_count -= 1;
        Ok(())
    }

    /// One path per node at depth `i`, projected onto its final edge.
    pub fn paths_at_time(&self, i: usize) -> Result<Vec<PathSample<'_>>> {
        if self.width(i) == 0 {
            return Err(Error::EmptyDepth(i));
        }
        Ok(self
            .nodes_at(i)
            .map(|(id, node)| PathSample {
                node: id,
                serial: node.serial,
                parent_state: node
                    .parent
                    .map(|p| &self.node(p).expect("live parent").state),
                edge: node.edge.as_ref(),
                state: &node.state,
                accumulated_cost: node.accumulated_cost,
            })
            .collect())
    }

    /// Full root-to-node path as node handles, root first.
    pub fn path(&self, id: NodeId) -> Result<Vec<NodeId>> {
        let mut out = vec![id];
        let mut cur = self.node_or_err(id)?;
        while let Some(parent) = cur.parent {
            out.push(parent);
            cur = self.node_or_err(parent)?;
        }
        out.reverse();
        Ok(out)
    }

    /// CSV dump: `node_id,depth,parent_id,accumulated_cost,x1..xn`. The root has an
    /// empty parent id. Node ids are creation serials.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.levels[0]
            .slots
            .first()
            .and_then(Option::as_ref)
            .map_or(0, |r| r.state.len());
        let mut header: Vec<String> = ["node_id", "depth", "parent_id", "accumulated_cost"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=n).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for depth in 0..self.levels.len() {
            for (_, node) in self.nodes_at(depth) {
                let parent = node
                    .parent
                    .and_then(|p| self.node(p))
                    .map_or(String::new(), |p| p.serial.to_string());
                let mut row = vec![
                    node.serial.to_string(),
                    depth.to_string(),
                    parent,
                    format!("{:e}", node.accumulated_cost),
                ];
                row.extend(node.state.iter().map(|x| format!("{x:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn edge() -> EdgeData {
        EdgeData {
            drift: v(&[0.0]),
            noise: v(&[0.0]),
            control: v(&[0.0]),
        }
    }

    #[test]
    fn root_invariants() {
        let t = BranchTree::new(v(&[1.0]), 3, 0.1);
        let root = t.node(t.root()).unwrap();
        assert_eq!(root.depth, 0);
        assert!(root.parent.is_none());
        assert_eq!(root.accumulated_cost, 0.0);
        assert_eq!(t.widths(), vec![1, 0, 0, 0]);
        let paths = t.paths_at_time(0).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].parent_state.is_none());
        assert_eq!(paths[0].state, &v(&[1.0]));
    }

    #[test]
    fn accumulated_cost_is_additive() {
        let mut t = BranchTree::new(v(&[0.0]), 3, 0.5);
        let a = t.add_edge(0, t.root(), edge(), v(&[1.0]), 0.0).unwrap();
        assert_eq!(t.node(a).unwrap().accumulated_cost, 0.0);
        let b = t.add_edge(1, a, edge(), v(&[2.0]), 0.6).unwrap();
        assert!((t.node(b).unwrap().accumulated_cost - 0.3).abs() < 1e-15);
        let c = t.add_edge(2, b, edge(), v(&[3.0]), 0.2).unwrap();
        assert!((t.node(c).unwrap().accumulated_cost - 0.4).abs() < 1e-15);
        assert_eq!(t.node(a).unwrap().child_count, 1);
        assert_eq!(t.path(c).unwrap(), vec![t.root(), a, b, c]);
    }

    #[test]
    fn add_edge_errors() {
        let mut t = BranchTree::new(v(&[0.0]), 1, 0.5);
        let a = t.add_edge(0, t.root(), edge(), v(&[1.0]), 0.0).unwrap();
        assert!(matches!(
            t.add_edge(1, a, edge(), v(&[2.0]), 0.0),
            Err(Error::DepthOverflow { .. })
        ));
        assert!(t.add_edge(0, a, edge(), v(&[2.0]), 0.0).is_err());
        t.remove_leaf(a).unwrap();
        assert!(matches!(
            t.add_edge(0, NodeId { depth: 0, slot: 5 }, edge(), v(&[2.0]), 0.0),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn shared_prefixes_and_path_counts() {
        let mut t = BranchTree::new(v(&[0.0]), 2, 0.1);
        let a = t.add_edge(0, t.root(), edge(), v(&[1.0]), 0.0).unwrap();
        let kids: Vec<_> = (0..3)
            .map(|k| t.add_edge(1, a, edge(), v(&[k as f64]), 0.0).unwrap())
            .collect();
        let paths = t.paths_at_time(2).unwrap();
        assert_eq!(paths.len(), t.width(2));
        assert_eq!(paths.len(), 3);
        for (p, k) in paths.iter().zip(&kids) {
            assert_eq!(p.node, *k);
            assert_eq!(p.parent_state, Some(&v(&[1.0])));
            assert_eq!(t.path(*k).unwrap()[..2], [t.root(), a]);
        }
        assert!(matches!(t.paths_at_time(3), Err(Error::EmptyDepth(3))));
    }

    #[test]
    fn remove_leaf_rules() {
        let mut t = BranchTree::new(v(&[0.0]), 2, 0.1);
        let a = t.add_edge(0, t.root(), edge(), v(&[1.0]), 0.0).unwrap();
        let b = t.add_edge(1, a, edge(), v(&[1.0]), 0.0).unwrap();
        assert!(matches!(t.remove_leaf(a), Err(Error::HasChildren(_))));
        assert!(t.remove_leaf(t.root()).is_err());
        t.remove_leaf(b).unwrap();
        assert!(t.node(b).is_none());
        assert!(t.remove_leaf(b).is_err());
        t.remove_leaf(a).unwrap();
        assert_eq!(t.node(t.root()).unwrap().child_count, 0);
        assert_eq!(t.widths(), vec![1, 0, 0]);
    }

    #[test]
    fn cascade_removal_empties_tree() {
        let mut t = BranchTree::new(v(&[0.0]), 3, 0.1);
        for k in 0..4 {
            let mut parent = t.root();
            for d in 0..3 {
                parent = t.add_edge(d, parent, edge(), v(&[k as f64]), 1.0).unwrap();
            }
        }
        // handles survive removals elsewhere
        let keep = t.id_at(1, 2).unwrap();
        for d in (1..=3).rev() {
            let ids: Vec<_> = t.ids_at(d).collect();
            for id in ids {
                t.remove_leaf(id).unwrap();
                if d == 1 && id < keep {
                    assert_eq!(t.node(keep).unwrap().state, v(&[2.0]));
                }
            }
        }
        assert_eq!(t.widths(), vec![1, 0, 0, 0]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn csv_dump() {
        let mut t = BranchTree::new(v(&[0.0, 1.0]), 1, 0.5);
        t.add_edge(0, t.root(), edge(), v(&[2.0, 3.0]), 1.0)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            [
                "node_id",
                "depth",
                "parent_id",
                "accumulated_cost",
                "x1",
                "x2"
            ]
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(&rows[0][2], "");
        assert_eq!(&rows[1][2], "0");
        assert_eq!(rows[1][3].parse::<f64>().unwrap(), 0.5);
    }
}

use std::ops::Range;

use super::layout::Layout;
use super::{LeafPoint, NodeRef, TruncatedTree, Vertex};
use crate::error::{Error, Result};

/// One ball of a materialized tree, with float views of its measure and diameter.
#[derive(Clone, Debug)]
pub struct Node {
    pub level: usize,
    pub parent: Option<usize>,
    pub child_index: u32,
    pub first_child: usize,
    pub child_count: u32,
    pub measure: f64,
    pub diameter: f64,
    /// Indices of the leaves below this ball.
    pub leaves: Range<usize>,
}

/// Fully materialized tree used by the spectral code: nodes are stored level
/// by level in lexicographic order, leaves are indexed `0..N` in the same order.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    depth: usize,
    nodes: Vec<Node>,
    level_offsets: Vec<usize>,
    aligned: bool,
}

impl Hierarchy {
    pub fn new(tree: &TruncatedTree) -> Result<Self> {
        Self::with_cap(tree, super::MAX_ARENA_NODES)
    }

    pub fn with_cap(tree: &TruncatedTree, max_nodes: usize) -> Result<Self> {
        let depth = tree.depth();
        let total = tree.vertex_count();
        if total > max_nodes as u128 {
            return Err(Error::CapExceeded {
                what: "materialized tree",
                size: total,
                cap: max_nodes,
            });
        }
        let owned;
        let layout = match (tree.layout(), tree.branching()) {
            (Some(layout), _) => layout,
            (None, Some(b)) => {
                owned = Layout::build(depth, max_nodes, |v| Ok(b.get(v.level()).copied().unwrap_or(0)))?;
                &owned
            }
            (None, None) => unreachable!("a tree is either uniform or an arena"),
        };
        let uniform = tree.layout().is_none();

        let mut level_offsets = Vec::with_capacity(depth + 2);
        let mut offset = 0;
        for row in &layout.levels {
            level_offsets.push(offset);
            offset += row.len();
        }
        level_offsets.push(offset);

        let mut nodes = Vec::with_capacity(offset);
        for (level, row) in layout.levels.iter().enumerate() {
            for (slot, s) in row.iter().enumerate() {
                let at = NodeRef {
                    level,
                    slot: if uniform { 0 } else { slot },
                };
                nodes.push(Node {
                    level,
                    parent: (level > 0).then(|| level_offsets[level - 1] + s.parent),
                    child_index: s.child_index,
                    first_child: level_offsets[level + 1] + s.first_child,
                    child_count: s.child_count,
                    measure: crate::numeric::ratio_to_f64(tree.measure_at(at)),
                    diameter: tree.diameter_f64_at(at),
                    leaves: 0..0,
                });
            }
        }
        let leaf_start = level_offsets[depth];
        for i in leaf_start..nodes.len() {
            nodes[i].leaves = (i - leaf_start)..(i - leaf_start + 1);
        }
        for i in (0..leaf_start).rev() {
            let first = nodes[i].first_child;
            let last = first + nodes[i].child_count as usize - 1;
            nodes[i].leaves = nodes[first].leaves.start..nodes[last].leaves.end;
        }

        Ok(Hierarchy {
            depth,
            nodes,
            level_offsets,
            aligned: tree.is_aligned(),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.level_offsets[self.depth]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn level_nodes(&self, level: usize) -> Range<usize> {
        self.level_offsets[level]..self.level_offsets[level + 1]
    }

    /// Nodes above the leaf level, i.e. the supports of wavelets.
    pub fn internal_nodes(&self) -> Range<usize> {
        0..self.level_offsets[self.depth]
    }

    pub fn children(&self, node: usize) -> Range<usize> {
        let n = &self.nodes[node];
        n.first_child..n.first_child + n.child_count as usize
    }

    pub fn leaf_node(&self, leaf: usize) -> usize {
        self.level_offsets[self.depth] + leaf
    }

    pub fn leaf_measures(&self) -> Vec<f64> {
        self.nodes[self.level_offsets[self.depth]..]
            .iter()
            .map(|n| n.measure)
            .collect()
    }

    /// Ancestor of `leaf` on `level` (the leaf node itself at level L).
    pub fn ancestor(&self, leaf: usize, level: usize) -> usize {
        let mut node = self.leaf_node(leaf);
        for _ in level..self.depth {
            node = self.nodes[node].parent.expect("leaf deeper than the root");
        }
        node
    }

    /// Chain of ancestors of `leaf`, `chain[l]` on level `l`.
    pub fn ancestors(&self, leaf: usize) -> Vec<usize> {
        let mut chain = vec![0; self.depth + 1];
        let mut node = self.leaf_node(leaf);
        for l in (0..=self.depth).rev() {
            chain[l] = node;
            if let Some(p) = self.nodes[node].parent {
                node = p;
            }
        }
        chain
    }

    /// Join of two leaves as a node index.
    pub fn join(&self, a: usize, b: usize) -> usize {
        let (mut x, mut y) = (self.leaf_node(a), self.leaf_node(b));
        while x != y {
            x = self.nodes[x].parent.expect("distinct roots");
            y = self.nodes[y].parent.expect("distinct roots");
        }
        x
    }

    pub fn address(&self, node: usize) -> Vertex {
        let mut digits = Vec::with_capacity(self.nodes[node].level);
        let mut at = node;
        while let Some(p) = self.nodes[at].parent {
            digits.push(self.nodes[at].child_index);
            at = p;
        }
        digits.reverse();
        Vertex::new(digits)
    }

    pub fn leaf_address(&self, leaf: usize) -> Vertex {
        self.address(self.leaf_node(leaf))
    }

    pub fn node_of(&self, v: &Vertex) -> Result<usize> {
        let mut node = 0usize;
        for &d in v.digits() {
            let n = &self.nodes[node];
            if d >= n.child_count {
                return Err(Error::UnknownVertex(v.to_string()));
            }
            node = n.first_child + d as usize;
        }
        Ok(node)
    }

    pub fn leaf_index(&self, x: &LeafPoint) -> Result<usize> {
        let node = self.node_of(x.vertex())?;
        if self.nodes[node].level != self.depth {
            return Err(Error::NotALeaf {
                address: x.to_string(),
                level: self.nodes[node].level,
                depth: self.depth,
            });
        }
        Ok(node - self.level_offsets[self.depth])
    }
}

use super::Vertex;
use crate::error::{Error, Result};

/// Position of a vertex inside a level-ordered arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Slot {
    pub parent: usize,
    pub child_index: u32,
    pub first_child: usize,
    pub child_count: u32,
}

/// Level-ordered arena: `levels[l]` lists the level-`l` vertices in
/// lexicographic address order, so every subtree covers a contiguous
/// range of slots on each deeper level.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub levels: Vec<Vec<Slot>>,
}

impl Layout {
    /// Breadth-first construction; `child_count` is asked once per vertex in
    /// level order and must return 0 exactly at the leaves (level `depth`).
    pub fn build(
        depth: usize,
        max_nodes: usize,
        mut child_count: impl FnMut(&Vertex) -> Result<u32>,
    ) -> Result<Layout> {
        let mut levels: Vec<Vec<Slot>> = Vec::with_capacity(depth + 1);
        let mut addresses = vec![Vertex::root()];
        let mut parents = vec![(0usize, 0u32)];
        let mut total = 0usize;
        for level in 0..=depth {
            total += addresses.len();
            if total > max_nodes {
                return Err(Error::CapExceeded {
                    what: "materialized tree",
                    size: total as u128,
                    cap: max_nodes,
                });
            }
            let mut slots = Vec::with_capacity(addresses.len());
            let mut next_addresses = Vec::new();
            let mut next_parents = Vec::new();
            for (slot, address) in addresses.iter().enumerate() {
                let count = child_count(address)?;
                if level < depth && count < 2 {
                    return Err(Error::InvalidTree(format!(
                        "vertex `{address}` at level {level} has {count} children; \
                         every vertex above the leaf level {depth} needs at least 2"
                    )));
                }
                if level == depth && count != 0 {
                    return Err(Error::InvalidTree(format!(
                        "vertex `{address}` lies at the leaf level {depth} but lists {count} children"
                    )));
                }
                let (parent, child_index) = parents[slot];
                slots.push(Slot {
                    parent,
                    child_index,
                    first_child: next_addresses.len(),
                    child_count: count,
                });
                for c in 0..count {
                    next_addresses.push(address.child(c));
                    next_parents.push((slot, c));
                }
            }
            levels.push(slots);
            addresses = next_addresses;
            parents = next_parents;
        }
        Ok(Layout { levels })
    }

    pub fn locate(&self, v: &Vertex) -> Option<usize> {
        let mut slot = 0usize;
        for (level, &d) in v.digits().iter().enumerate() {
            let s = self.levels.get(level)?[slot];
            if d >= s.child_count {
                return None;
            }
            slot = s.first_child + d as usize;
        }
        (v.level() < self.levels.len()).then_some(slot)
    }

    pub fn address(&self, level: usize, mut slot: usize) -> Vertex {
        let mut digits = vec![0u32; level];
        for l in (1..=level).rev() {
            let s = self.levels[l][slot];
            digits[l - 1] = s.child_index;
            slot = s.parent;
        }
        Vertex::new(digits)
    }

    /// Slot range of the descendants of `(level, slot)` on every level from
    /// `level` down to the leaves.
    pub fn descendant_ranges(&self, level: usize, slot: usize) -> Vec<std::ops::Range<usize>> {
        let mut ranges = vec![slot..slot + 1];
        for l in level..self.levels.len() - 1 {
            let r = ranges.last().unwrap().clone();
            let row = &self.levels[l];
            let first = row[r.start].first_child;
            let last = &row[r.end - 1];
            ranges.push(first..last.first_child + last.child_count as usize);
        }
        ranges
    }
}

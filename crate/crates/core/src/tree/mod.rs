//! Finitely truncated Michon trees with an equitising ultrametric.
//!
//! Diameters and measures are exact rationals. Regular families (p-adic and
//! level-regular with per-level diameters) are stored by level only, so depth
//! 20 trees with billions of vertices cost nothing; explicit, random, and
//! per-vertex-diameter trees are materialized in a level-ordered arena.

mod hierarchy;
mod layout;
mod spec;
mod vertex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use hierarchy::{Hierarchy, Node};
pub use spec::{DiameterSpec, ExplicitShape, Family, Metric, TreeSpec};
pub use vertex::{join, Ball, LeafPoint, Vertex};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, ratio_ln, ratio_to_f64};
use layout::Layout;

/// Upper bound on vertices materialized for explicit and random trees.
pub const MAX_ARENA_NODES: usize = 1 << 23;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Canonical,
    Baire,
    Explicit,
}

#[derive(Clone, Debug)]
enum Shape {
    /// `branching[l]` children for every level-`l` vertex.
    Uniform(Vec<u32>),
    Arena(Layout),
}

/// Per-level or per-vertex data.
#[derive(Clone, Debug)]
enum LevelData<T> {
    PerLevel(Vec<T>),
    PerSlot(Vec<Vec<T>>),
}

impl<T> LevelData<T> {
    fn get(&self, level: usize, slot: usize) -> &T {
        match self {
            LevelData::PerLevel(v) => &v[level],
            LevelData::PerSlot(v) => &v[level][slot],
        }
    }

    fn map<U>(&self, f: impl Fn(&T) -> U) -> LevelData<U> {
        match self {
            LevelData::PerLevel(v) => LevelData::PerLevel(v.iter().map(&f).collect()),
            LevelData::PerSlot(v) => {
                LevelData::PerSlot(v.iter().map(|row| row.iter().map(&f).collect()).collect())
            }
        }
    }
}

/// A located vertex. For uniform trees every vertex of a level shares slot 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct NodeRef {
    pub level: usize,
    pub slot: usize,
}

/// Immutable truncated tree; all queries are pure.
#[derive(Clone, Debug)]
pub struct TruncatedTree {
    depth: usize,
    shape: Shape,
    metric: MetricKind,
    diameters: LevelData<BigRational>,
    diameters_f64: LevelData<f64>,
    ln_diameters: LevelData<f64>,
    measures: LevelData<BigRational>,
    aligned: bool,
    period: usize,
    /// Periodic branching list continuing the tree past its depth, when the
    /// family defines one and the metric is level-determined.
    continuation: Option<Vec<u32>>,
}

pub fn build_tree(spec: &TreeSpec) -> Result<TruncatedTree> {
    TruncatedTree::build(spec)
}

/// Child count drawn for the `k`-th vertex (breadth-first, lexicographic) of a
/// random tree: ChaCha8 seeded with `SeedableRng::seed_from_u64(seed)`, one
/// `next_u64` per internal vertex, mapped to `min + ((x * span) >> 64)` with
/// `span = max - min + 1`.
pub fn random_child_count(rng: &mut ChaCha8Rng, min: u32, max: u32) -> u32 {
    let span = u128::from(max - min + 1);
    min + ((u128::from(rng.next_u64()) * span) >> 64) as u32
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn is_prime(p: u32) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

fn minimal_period(seq: &[u32]) -> usize {
    (1..=seq.len())
        .find(|&q| seq.len().is_multiple_of(q) && seq.iter().enumerate().all(|(i, b)| *b == seq[i % q]))
        .unwrap_or(seq.len())
}

impl TruncatedTree {
    pub fn build(spec: &TreeSpec) -> Result<Self> {
        let depth = spec.depth;
        if depth == 0 {
            return Err(Error::InvalidTree("depth must be at least 1".into()));
        }
        let mut period = 1;
        let mut continuation = None;
        let mut shape = match &spec.family {
            Family::PAdic { p } => {
                if !is_prime(*p) {
                    return Err(Error::InvalidTree(format!(
                        "p-adic family needs a prime p >= 2, got {p}"
                    )));
                }
                continuation = Some(vec![*p]);
                Shape::Uniform(vec![*p; depth])
            }
            Family::LevelRegular { branching } => {
                if branching.is_empty() {
                    return Err(Error::InvalidTree("level-regular branching list is empty".into()));
                }
                if let Some((l, b)) = branching.iter().enumerate().find(|(_, b)| **b < 2) {
                    return Err(Error::InvalidTree(format!(
                        "level-regular branching number {b} at position {l} is below 2"
                    )));
                }
                period = minimal_period(branching);
                continuation = Some(branching[..period].to_vec());
                Shape::Uniform((0..depth).map(|l| branching[l % branching.len()]).collect())
            }
            Family::Explicit(shape) => {
                if shape.depth() != depth {
                    return Err(Error::InvalidTree(format!(
                        "explicit tree has depth {} but depth {depth} was requested",
                        shape.depth()
                    )));
                }
                let counts = shape.counts();
                for v in counts.keys() {
                    if let Some(parent) = v.parent() {
                        let ok = counts
                            .get(&parent)
                            .is_some_and(|&n| v.digits()[v.level() - 1] < n);
                        if !ok {
                            return Err(Error::InvalidTree(format!(
                                "vertex `{v}` is listed but is not a child of a listed vertex"
                            )));
                        }
                    }
                }
                Shape::Arena(Layout::build(depth, MAX_ARENA_NODES, |v| {
                    Ok(counts.get(v).copied().unwrap_or(0))
                })?)
            }
            Family::RandomBounded { min, max, seed } => {
                if *min < 2 || max < min {
                    return Err(Error::InvalidTree(format!(
                        "random branching range {min}..={max} must satisfy 2 <= min <= max"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Shape::Arena(Layout::build(depth, MAX_ARENA_NODES, |v| {
                    Ok(if v.level() < depth {
                        random_child_count(&mut rng, *min, *max)
                    } else {
                        0
                    })
                })?)
            }
        };

        // per-vertex diameters need a materialized arena
        if let (Metric::ExplicitDiameters(DiameterSpec::PerVertex(_)), Shape::Uniform(b)) =
            (&spec.metric, &shape)
        {
            let b = b.clone();
            shape = Shape::Arena(Layout::build(depth, MAX_ARENA_NODES, |v| {
                Ok(b.get(v.level()).copied().unwrap_or(0))
            })?);
        }

        let measures = match &shape {
            Shape::Uniform(b) => {
                let mut m = vec![BigRational::one()];
                for &n in b {
                    let next = m.last().unwrap() / BigRational::from_integer(n.into());
                    m.push(next);
                }
                LevelData::PerLevel(m)
            }
            Shape::Arena(layout) => {
                let mut rows = vec![vec![BigRational::one()]];
                for l in 1..=depth {
                    let prev = &rows[l - 1];
                    let row = layout.levels[l]
                        .iter()
                        .map(|s| {
                            let parent = &layout.levels[l - 1][s.parent];
                            &prev[s.parent] / BigRational::from_integer(parent.child_count.into())
                        })
                        .collect();
                    rows.push(row);
                }
                LevelData::PerSlot(rows)
            }
        };

        let (metric, diameters) = match &spec.metric {
            Metric::Canonical => (MetricKind::Canonical, measures.clone()),
            Metric::Baire => (
                MetricKind::Baire,
                LevelData::PerLevel((0..=depth).map(|l| ratio(1, 1u64 << l.min(62))).collect()),
            ),
            Metric::ExplicitDiameters(DiameterSpec::PerLevel(values)) => {
                if values.len() != depth + 1 {
                    return Err(Error::InvalidTree(format!(
                        "per-level diameters need {} values (levels 0..={depth}), got {}",
                        depth + 1,
                        values.len()
                    )));
                }
                if let Some(v) = values.iter().find(|v| !v.is_positive()) {
                    return Err(Error::InvalidTree(format!("diameter {v} is not positive")));
                }
                if let Some(l) = (1..values.len()).find(|&l| values[l] >= values[l - 1]) {
                    return Err(Error::InvalidTree(format!(
                        "diameters must strictly decrease with depth: level {l} has {} >= {}",
                        values[l],
                        values[l - 1]
                    )));
                }
                (MetricKind::Explicit, LevelData::PerLevel(values.clone()))
            }
            Metric::ExplicitDiameters(DiameterSpec::PerVertex(map)) => {
                let Shape::Arena(layout) = &shape else {
                    unreachable!("per-vertex diameters force an arena")
                };
                (MetricKind::Explicit, per_vertex_diameters(layout, map)?)
            }
        };
        if depth > 62 && metric == MetricKind::Baire {
            return Err(Error::InvalidTree("Baire metric supports depth <= 62".into()));
        }

        let aligned = match (&measures, &diameters) {
            (LevelData::PerLevel(m), LevelData::PerLevel(d)) => m == d,
            _ => {
                let counts = level_sizes(&shape, depth);
                (0..=depth).all(|l| {
                    (0..counts[l]).all(|s| measures.get(l, s) == diameters.get(l, s))
                })
            }
        };
        // explicit diameters carry no periodic structure we can rely on
        if metric == MetricKind::Explicit || !matches!(shape, Shape::Uniform(_)) {
            period = 1;
            continuation = None;
        }

        Ok(TruncatedTree {
            depth,
            diameters_f64: diameters.map(ratio_to_f64),
            ln_diameters: diameters.map(ratio_ln),
            diameters,
            measures,
            shape,
            metric,
            aligned,
            period,
            continuation,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    /// Whether measure = diameter for every ball.
    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    /// Period of the level structure (branching numbers and diameter ratios);
    /// 1 for p-adic trees, the minimal period of the list for level-regular
    /// trees, and 1 for trees without level structure.
    pub fn level_period(&self) -> usize {
        self.period
    }

    /// Branching numbers of the infinite tree this one truncates: the child
    /// count of a level-`l` vertex is `list[l % list.len()]` for every `l`.
    /// Only defined for p-adic and level-regular families under the canonical
    /// or Baire metric.
    pub fn periodic_branching(&self) -> Option<&[u32]> {
        self.continuation.as_deref()
    }

    /// True when every vertex of a level has the same branching and diameter.
    pub fn is_level_uniform(&self) -> bool {
        matches!(
            (&self.shape, &self.diameters),
            (Shape::Uniform(_), LevelData::PerLevel(_))
        )
    }

    pub(crate) fn locate(&self, v: &Vertex) -> Result<NodeRef> {
        let unknown = || Error::UnknownVertex(v.to_string());
        if v.level() > self.depth {
            return Err(unknown());
        }
        match &self.shape {
            Shape::Uniform(b) => {
                if v.digits().iter().zip(b).any(|(d, n)| d >= n) {
                    return Err(unknown());
                }
                Ok(NodeRef {
                    level: v.level(),
                    slot: 0,
                })
            }
            Shape::Arena(layout) => layout
                .locate(v)
                .map(|slot| NodeRef {
                    level: v.level(),
                    slot,
                })
                .ok_or_else(unknown),
        }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.locate(v).is_ok()
    }

    /// Wrap a level-L vertex as a boundary point representative.
    pub fn leaf(&self, v: Vertex) -> Result<LeafPoint> {
        self.locate(&v)?;
        if v.level() != self.depth {
            return Err(Error::NotALeaf {
                address: v.to_string(),
                level: v.level(),
                depth: self.depth,
            });
        }
        Ok(LeafPoint(v))
    }

    pub fn leaf_at(&self, address: &str) -> Result<LeafPoint> {
        self.leaf(address.parse()?)
    }

    pub(crate) fn child_count_at(&self, node: NodeRef) -> u32 {
        match &self.shape {
            Shape::Uniform(b) => b.get(node.level).copied().unwrap_or(0),
            Shape::Arena(layout) => layout.levels[node.level][node.slot].child_count,
        }
    }

    pub(crate) fn diameter_at(&self, node: NodeRef) -> &BigRational {
        self.diameters.get(node.level, node.slot)
    }

    pub(crate) fn diameter_f64_at(&self, node: NodeRef) -> f64 {
        *self.diameters_f64.get(node.level, node.slot)
    }

    pub(crate) fn measure_at(&self, node: NodeRef) -> &BigRational {
        self.measures.get(node.level, node.slot)
    }

    pub fn child_count(&self, v: &Vertex) -> Result<u32> {
        Ok(self.child_count_at(self.locate(v)?))
    }

    pub fn diameter(&self, v: &Vertex) -> Result<BigRational> {
        Ok(self.diameter_at(self.locate(v)?).clone())
    }

    pub fn measure(&self, v: &Vertex) -> Result<BigRational> {
        Ok(self.measure_at(self.locate(v)?).clone())
    }

    pub fn ball(&self, v: &Vertex) -> Result<Ball> {
        let node = self.locate(v)?;
        Ok(Ball {
            vertex: v.clone(),
            diameter: self.diameter_at(node).clone(),
            measure: self.measure_at(node).clone(),
            child_count: self.child_count_at(node),
        })
    }

    /// Number of vertices on `level` (saturating at `u128::MAX`).
    pub fn vertex_count_at_level(&self, level: usize) -> u128 {
        match &self.shape {
            Shape::Uniform(b) => b[..level.min(self.depth)]
                .iter()
                .fold(1u128, |acc, &n| acc.saturating_mul(n.into())),
            Shape::Arena(layout) => layout.levels.get(level).map_or(0, |r| r.len() as u128),
        }
    }

    pub fn vertex_count(&self) -> u128 {
        (0..=self.depth).fold(0u128, |acc, l| acc.saturating_add(self.vertex_count_at_level(l)))
    }

    pub fn leaf_count(&self) -> u128 {
        self.vertex_count_at_level(self.depth)
    }

    /// Level-`level` vertices in lexicographic order.
    pub fn vertices_at_level(&self, level: usize, cap: usize) -> Result<Vec<Vertex>> {
        if level > self.depth {
            return Ok(Vec::new());
        }
        let count = self.vertex_count_at_level(level);
        if count > cap as u128 {
            return Err(Error::CapExceeded {
                what: "vertex enumeration",
                size: count,
                cap,
            });
        }
        Ok(match &self.shape {
            Shape::Uniform(_) => (0..count).map(|k| self.uniform_vertex(level, k)).collect(),
            Shape::Arena(layout) => (0..layout.levels[level].len())
                .map(|s| layout.address(level, s))
                .collect(),
        })
    }

    /// All vertices, by level and then address.
    pub fn vertices(&self, cap: usize) -> Result<Vec<Vertex>> {
        let total = self.vertex_count();
        if total > cap as u128 {
            return Err(Error::CapExceeded {
                what: "vertex enumeration",
                size: total,
                cap,
            });
        }
        let mut out = Vec::with_capacity(total as usize);
        for l in 0..=self.depth {
            out.extend(self.vertices_at_level(l, cap)?);
        }
        Ok(out)
    }

    /// The `k`-th level vertex of a uniform tree (mixed-radix digits of `k`).
    fn uniform_vertex(&self, level: usize, mut k: u128) -> Vertex {
        let Shape::Uniform(b) = &self.shape else {
            unreachable!()
        };
        let mut digits = vec![0u32; level];
        for l in (0..level).rev() {
            let n = u128::from(b[l]);
            digits[l] = (k % n) as u32;
            k /= n;
        }
        Vertex::new(digits)
    }

    /// First, middle and last vertex of each level (deduplicated).
    pub fn sample_vertices(&self) -> Vec<Vertex> {
        let mut out = Vec::new();
        for level in 0..=self.depth {
            let count = self.vertex_count_at_level(level);
            let mut picks = vec![0, count / 2, count - 1];
            picks.dedup();
            for k in picks {
                let v = match &self.shape {
                    Shape::Uniform(_) => self.uniform_vertex(level, k),
                    Shape::Arena(layout) => layout.address(level, k as usize),
                };
                out.push(v);
            }
        }
        out
    }

    pub fn distance(&self, x: &LeafPoint, y: &LeafPoint) -> Result<BigRational> {
        self.locate(x.vertex())?;
        self.locate(y.vertex())?;
        if x == y {
            return Ok(BigRational::zero());
        }
        self.diameter(&join(x, y))
    }

    /// `sums[k]` = Σ diam(w)^s over the descendants `w` of `v` on level `v.level() + k`.
    pub fn descendant_power_sums(&self, v: &Vertex, s: f64) -> Result<Vec<f64>> {
        Ok(self
            .descendant_log_power_sums(v, s)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    /// Natural logarithms of [`Self::descendant_power_sums`], computed without
    /// leaving log space so deep levels and large `s` do not underflow.
    pub fn descendant_log_power_sums(&self, v: &Vertex, s: f64) -> Result<Vec<f64>> {
        let node = self.locate(v)?;
        Ok(match &self.shape {
            Shape::Uniform(b) => {
                let mut ln_count = 0.0;
                let mut sums = Vec::with_capacity(self.depth - node.level + 1);
                for l in node.level..=self.depth {
                    sums.push(ln_count + s * self.ln_diameters.get(l, 0));
                    if l < self.depth {
                        ln_count += f64::from(b[l]).ln();
                    }
                }
                sums
            }
            Shape::Arena(layout) => layout
                .descendant_ranges(node.level, node.slot)
                .into_iter()
                .enumerate()
                .map(|(k, range)| {
                    let level = node.level + k;
                    let logs: Vec<f64> = range
                        .map(|slot| s * self.ln_diameters.get(level, slot))
                        .collect();
                    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let scaled: Vec<f64> = logs.iter().map(|x| (x - top).exp()).collect();
                    top + pairwise_sum(&scaled).ln()
                })
                .collect(),
        })
    }

    pub(crate) fn layout(&self) -> Option<&Layout> {
        match &self.shape {
            Shape::Arena(layout) => Some(layout),
            Shape::Uniform(_) => None,
        }
    }

    pub(crate) fn branching(&self) -> Option<&[u32]> {
        match &self.shape {
            Shape::Uniform(b) => Some(b),
            Shape::Arena(_) => None,
        }
    }
}

fn level_sizes(shape: &Shape, depth: usize) -> Vec<usize> {
    match shape {
        Shape::Uniform(_) => vec![1; depth + 1],
        Shape::Arena(layout) => layout.levels.iter().map(Vec::len).collect(),
    }
}

fn per_vertex_diameters(
    layout: &Layout,
    map: &std::collections::BTreeMap<Vertex, BigRational>,
) -> Result<LevelData<BigRational>> {
    let mut rows: Vec<Vec<BigRational>> = Vec::with_capacity(layout.levels.len());
    for (level, slots) in layout.levels.iter().enumerate() {
        let mut row = Vec::with_capacity(slots.len());
        for (slot, s) in slots.iter().enumerate() {
            let address = layout.address(level, slot);
            let d = map.get(&address).cloned().ok_or_else(|| {
                Error::InvalidTree(format!("no diameter given for vertex `{address}`"))
            })?;
            if !d.is_positive() {
                return Err(Error::InvalidTree(format!(
                    "diameter of `{address}` is not positive"
                )));
            }
            if level > 0 {
                let parent = &rows[level - 1][s.parent];
                if &d >= parent {
                    return Err(Error::InvalidTree(format!(
                        "diameter of `{address}` ({d}) is not below its parent's ({parent})"
                    )));
                }
                if s.child_index > 0 && row.last() != Some(&d) {
                    return Err(Error::InvalidTree(format!(
                        "children of one vertex must share a diameter (not equitising at `{address}`)"
                    )));
                }
            }
            row.push(d);
        }
        rows.push(row);
    }
    if let Some(extra) = map.keys().find(|v| layout.locate(v).is_none()) {
        return Err(Error::InvalidTree(format!(
            "diameter given for `{extra}`, which is not in the tree"
        )));
    }
    Ok(LevelData::PerSlot(rows))
}

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A vertex of the Michon tree, addressed by the child indices taken from the root.
///
/// The empty address is the root. Addresses print as dot-separated indices (`0.1.0`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex(Vec<u32>);

impl Vertex {
    pub fn root() -> Self {
        Vertex(Vec::new())
    }

    pub fn new(digits: Vec<u32>) -> Self {
        Vertex(digits)
    }

    pub fn digits(&self) -> &[u32] {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, index: u32) -> Vertex {
        let mut digits = self.0.clone();
        digits.push(index);
        Vertex(digits)
    }

    pub fn parent(&self) -> Option<Vertex> {
        let (_, rest) = self.0.split_last()?;
        Some(Vertex(rest.to_vec()))
    }

    /// Ancestor at `level` (the vertex itself when `level == self.level()`).
    pub fn ancestor(&self, level: usize) -> Option<Vertex> {
        (level <= self.0.len()).then(|| Vertex(self.0[..level].to_vec()))
    }

    /// True when `self` is `other` or one of its ancestors.
    pub fn contains(&self, other: &Vertex) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Deepest common ancestor.
    pub fn meet(&self, other: &Vertex) -> Vertex {
        let len = self
            .0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count();
        Vertex(self.0[..len].to_vec())
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Vertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Vertex::root());
        }
        s.split('.')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidTree(format!("bad address `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Vertex)
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A level-L cylinder standing in for a boundary point of the Cantor set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafPoint(pub(crate) Vertex);

impl LeafPoint {
    pub fn vertex(&self) -> &Vertex {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.level()
    }
}

impl fmt::Display for LeafPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A vertex seen as a clopen ball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball {
    pub vertex: Vertex,
    pub diameter: BigRational,
    pub measure: BigRational,
    pub child_count: u32,
}

impl Ball {
    pub fn level(&self) -> usize {
        self.vertex.level()
    }
}

/// Deepest common ancestor of two leaves.
pub fn join(x: &LeafPoint, y: &LeafPoint) -> Vertex {
    x.0.meet(&y.0)
}

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde_json::Value;

use super::Vertex;
use crate::error::{Error, Result};

/// Which tree to build.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Regular tree with `p` children everywhere (the Michon tree of the p-adic integers).
    PAdic { p: u32 },
    /// Level `l` vertices have `branching[l % branching.len()]` children.
    LevelRegular { branching: Vec<u32> },
    /// Child counts listed per internal vertex.
    Explicit(ExplicitShape),
    /// Child counts drawn uniformly from `min..=max`, see [`super::random_child_count`].
    RandomBounded { min: u32, max: u32, seed: u64 },
}

/// How diameters are assigned to balls.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    /// diam(root) = 1, diam(child) = diam(parent) / childCount(parent).
    Canonical,
    /// diam = 2^-level.
    Baire,
    ExplicitDiameters(DiameterSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiameterSpec {
    /// One value per level `0..=depth`.
    PerLevel(Vec<BigRational>),
    /// One value per vertex, keyed by address.
    PerVertex(BTreeMap<Vertex, BigRational>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeSpec {
    pub family: Family,
    pub depth: usize,
    pub metric: Metric,
}

impl TreeSpec {
    pub fn padic(p: u32, depth: usize) -> Self {
        TreeSpec {
            family: Family::PAdic { p },
            depth,
            metric: Metric::Canonical,
        }
    }

    pub fn level_regular(branching: Vec<u32>, depth: usize) -> Self {
        TreeSpec {
            family: Family::LevelRegular { branching },
            depth,
            metric: Metric::Canonical,
        }
    }

    pub fn random_bounded(min: u32, max: u32, seed: u64, depth: usize) -> Self {
        TreeSpec {
            family: Family::RandomBounded { min, max, seed },
            depth,
            metric: Metric::Canonical,
        }
    }

    /// An explicit tree; the depth is taken from the shape.
    pub fn explicit(shape: ExplicitShape) -> Self {
        let depth = shape.depth();
        TreeSpec {
            family: Family::Explicit(shape),
            depth,
            metric: Metric::Canonical,
        }
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }
}

/// Child counts of the internal vertices of an explicit tree.
///
/// Two JSON encodings are accepted:
///
/// * nested arrays: a vertex is an array of its children, and an integer `k`
///   stands for a vertex whose `k` children are leaves, e.g. `[3, [2, 2]]`;
/// * an adjacency object keyed by address, e.g. `{"": 2, "0": 3, "1": 2}`
///   (the empty key is the root; unlisted vertices are leaves).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExplicitShape {
    counts: BTreeMap<Vertex, u32>,
}

impl ExplicitShape {
    pub fn from_counts(counts: BTreeMap<Vertex, u32>) -> Self {
        ExplicitShape { counts }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json(&value)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let mut counts = BTreeMap::new();
        match value {
            Value::Object(map) => {
                for (key, count) in map {
                    let vertex: Vertex = key.parse()?;
                    let count = count
                        .as_u64()
                        .and_then(|c| u32::try_from(c).ok())
                        .ok_or_else(|| {
                            Error::InvalidTree(format!("child count of `{key}` is not an integer"))
                        })?;
                    counts.insert(vertex, count);
                }
            }
            Value::Array(_) | Value::Number(_) => nested(value, Vertex::root(), &mut counts)?,
            _ => {
                return Err(Error::InvalidTree(
                    "expected a nested array or an address-keyed object".into(),
                ))
            }
        }
        Ok(ExplicitShape { counts })
    }

    pub fn counts(&self) -> &BTreeMap<Vertex, u32> {
        &self.counts
    }

    /// Level of the deepest leaf implied by the listed counts.
    pub fn depth(&self) -> usize {
        self.counts.keys().map(|v| v.level() + 1).max().unwrap_or(0)
    }
}

fn nested(value: &Value, at: Vertex, counts: &mut BTreeMap<Vertex, u32>) -> Result<()> {
    match value {
        Value::Number(n) => {
            let k = n
                .as_u64()
                .and_then(|c| u32::try_from(c).ok())
                .ok_or_else(|| Error::InvalidTree(format!("bad child count at `{at}`")))?;
            counts.insert(at, k);
            Ok(())
        }
        Value::Array(children) => {
            counts.insert(at.clone(), children.len() as u32);
            for (i, child) in children.iter().enumerate() {
                nested(child, at.child(i as u32), counts)?;
            }
            Ok(())
        }
        _ => Err(Error::InvalidTree(format!(
            "vertex `{at}` must be an array of children or a child count"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_adjacency_forms_agree() {
        let a = ExplicitShape::from_json_str("[3, 2]").unwrap();
        let b = ExplicitShape::from_json_str(r#"{"": 2, "0": 3, "1": 2}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.depth(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ExplicitShape::from_json_str(r#""tree""#).is_err());
        assert!(ExplicitShape::from_json_str(r#"{"": -1}"#).is_err());
        assert!(ExplicitShape::from_json_str(r#"{"x": 2}"#).is_err());
    }
}

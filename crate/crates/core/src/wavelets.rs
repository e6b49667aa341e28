//! Ultrametric wavelets: an orthonormal basis of the level-L locally constant
//! functions made of the constant function and, for every ball `w` above the
//! leaves, the `n_w - 1` functions
//!
//! ψ_{w,j}(x) = μ(w)^{-1/2} · exp(2πi·j·c(x)/n_w) · 1_w(x),  j = 1..n_w-1,
//!
//! where `c(x)` is the index of the child of `w` containing `x`.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_complex;
use crate::tree::{Hierarchy, LeafPoint, Vertex};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct WaveletIndex {
    pub support: Vertex,
    pub frequency: u32,
}

impl WaveletIndex {
    pub fn new(support: Vertex, frequency: u32) -> Self {
        WaveletIndex { support, frequency }
    }
}

impl fmt::Display for WaveletIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ψ[{}; {}]", self.support, self.frequency)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisElement {
    Constant,
    Wavelet { node: usize, frequency: u32 },
}

/// A function on the level-L leaves, one value per leaf in leaf order.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionVector {
    pub values: Vec<Complex64>,
}

impl FunctionVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        FunctionVector { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        FunctionVector {
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        FunctionVector {
            values: vec![Complex64::new(value, 0.0); len],
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    /// Indicator of the ball `node`.
    pub fn indicator(h: &Hierarchy, node: usize) -> Self {
        let mut f = Self::zeros(h.leaf_count());
        for leaf in h.node(node).leaves.clone() {
            f.values[leaf] = Complex64::new(1.0, 0.0);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_abs_diff(&self, other: &FunctionVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// ⟨f, g⟩ = Σ_leaves f·conj(g)·μ(leaf).
pub fn inner(h: &Hierarchy, f: &FunctionVector, g: &FunctionVector) -> Result<Complex64> {
    let n = h.leaf_count();
    f.check_len(n)?;
    g.check_len(n)?;
    let mu = h.leaf_measures();
    let terms: Vec<Complex64> = (0..n).map(|i| f.values[i] * g.values[i].conj() * mu[i]).collect();
    Ok(pairwise_sum_complex(&terms))
}

pub fn norm(h: &Hierarchy, f: &FunctionVector) -> Result<f64> {
    Ok(inner(h, f, f)?.re.max(0.0).sqrt())
}

/// exp(2πi·j·c/n), with the phase reduced mod n before scaling.
pub(crate) fn phase(j: u32, c: u32, n: u32) -> Complex64 {
    let k = (u64::from(j) * u64::from(c)) % u64::from(n);
    Complex64::from_polar(1.0, TAU * k as f64 / f64::from(n))
}

/// ψ_{w,j}(x).
pub fn evaluate_wavelet(h: &Hierarchy, index: &WaveletIndex, x: &LeafPoint) -> Result<Complex64> {
    let node = h.node_of(&index.support)?;
    let leaf = h.leaf_index(x)?;
    check_frequency(h, node, index)?;
    Ok(wavelet_value(h, node, index.frequency, leaf))
}

fn check_frequency(h: &Hierarchy, node: usize, index: &WaveletIndex) -> Result<()> {
    let n = h.node(node).child_count;
    if n == 0 {
        return Err(Error::LeafSupport(index.support.to_string()));
    }
    if index.frequency == 0 || index.frequency >= n {
        return Err(Error::InvalidParameter(format!(
            "frequency {} of {index} outside 1..{}",
            index.frequency,
            n - 1
        )));
    }
    Ok(())
}

pub(crate) fn wavelet_value(h: &Hierarchy, node: usize, j: u32, leaf: usize) -> Complex64 {
    let w = h.node(node);
    if !w.leaves.contains(&leaf) {
        return Complex64::zero();
    }
    let child = h.ancestor(leaf, w.level + 1);
    phase(j, h.node(child).child_index, w.child_count) / w.measure.sqrt()
}

/// The constant function followed by every wavelet, ordered by support level,
/// then support address, then frequency.
#[derive(Clone, Debug)]
pub struct WaveletBasis {
    elements: Vec<BasisElement>,
    /// Coefficient index of ψ_{w,1} for each internal node `w`.
    offsets: Vec<usize>,
}

pub fn enumerate_basis(h: &Hierarchy) -> WaveletBasis {
    WaveletBasis::new(h)
}

impl WaveletBasis {
    pub fn new(h: &Hierarchy) -> Self {
        let mut elements = vec![BasisElement::Constant];
        let mut offsets = Vec::with_capacity(h.internal_nodes().len());
        // nodes are stored by level, then address
        for node in h.internal_nodes() {
            offsets.push(elements.len());
            for frequency in 1..h.node(node).child_count {
                elements.push(BasisElement::Wavelet { node, frequency });
            }
        }
        debug_assert_eq!(elements.len(), h.leaf_count());
        WaveletBasis { elements, offsets }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> BasisElement {
        self.elements[k]
    }

    /// Coefficient index of ψ_{node, frequency}.
    pub fn position(&self, node: usize, frequency: u32) -> usize {
        self.offsets[node] + frequency as usize - 1
    }

    pub fn index_of(&self, h: &Hierarchy, index: &WaveletIndex) -> Result<usize> {
        let node = h.node_of(&index.support)?;
        check_frequency(h, node, index)?;
        Ok(self.position(node, index.frequency))
    }

    pub fn wavelet_index(&self, h: &Hierarchy, k: usize) -> Option<WaveletIndex> {
        match self.elements[k] {
            BasisElement::Constant => None,
            BasisElement::Wavelet { node, frequency } => {
                Some(WaveletIndex::new(h.address(node), frequency))
            }
        }
    }

    /// Values of basis element `k` on every leaf.
    pub fn element_vector(&self, h: &Hierarchy, k: usize) -> FunctionVector {
        let n = h.leaf_count();
        match self.elements[k] {
            BasisElement::Constant => FunctionVector::constant(n, 1.0),
            BasisElement::Wavelet { node, frequency } => {
                FunctionVector::new((0..n).map(|i| wavelet_value(h, node, frequency, i)).collect())
            }
        }
    }

    /// Max |⟨φ_a, φ_b⟩ − δ_ab| over all pairs, from dense inner products.
    pub fn gram_deviation(&self, h: &Hierarchy) -> f64 {
        let vectors: Vec<FunctionVector> = (0..self.len()).map(|k| self.element_vector(h, k)).collect();
        let mut worst: f64 = 0.0;
        for a in 0..vectors.len() {
            for b in a..vectors.len() {
                let g = inner(h, &vectors[a], &vectors[b]).expect("same dimension");
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// Coefficients ⟨f, φ_k⟩ in basis order.
pub fn analyze(h: &Hierarchy, basis: &WaveletBasis, f: &FunctionVector) -> Result<Vec<Complex64>> {
    f.check_len(h.leaf_count())?;
    // ball sums Σ_{leaves under v} f·μ
    let nodes = h.nodes();
    let mut sums = vec![Complex64::zero(); nodes.len()];
    for leaf in 0..h.leaf_count() {
        let node = h.leaf_node(leaf);
        sums[node] = f.values[leaf] * nodes[node].measure;
    }
    for node in h.internal_nodes().rev() {
        sums[node] = h.children(node).map(|c| sums[c]).sum();
    }
    let mut coeffs = vec![Complex64::zero(); basis.len()];
    coeffs[0] = sums[0];
    for node in h.internal_nodes() {
        let w = &nodes[node];
        let scale = w.measure.sqrt().recip();
        for j in 1..w.child_count {
            let acc: Complex64 = h
                .children(node)
                .map(|c| sums[c] * phase(j, nodes[c].child_index, w.child_count).conj())
                .sum();
            coeffs[basis.position(node, j)] = acc * scale;
        }
    }
    Ok(coeffs)
}

/// Σ_k coeffs[k]·φ_k.
pub fn synthesize(h: &Hierarchy, basis: &WaveletBasis, coeffs: &[Complex64]) -> Result<FunctionVector> {
    if coeffs.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: coeffs.len(),
        });
    }
    let nodes = h.nodes();
    let mut values = vec![Complex64::zero(); nodes.len()];
    values[0] = coeffs[0];
    for node in h.internal_nodes() {
        let w = &nodes[node];
        let scale = w.measure.sqrt().recip();
        for c in h.children(node) {
            let k = nodes[c].child_index;
            let mut v = values[node];
            for j in 1..w.child_count {
                v += coeffs[basis.position(node, j)] * phase(j, k, w.child_count) * scale;
            }
            values[c] = v;
        }
    }
    Ok(FunctionVector::new(
        (0..h.leaf_count()).map(|i| values[h.leaf_node(i)]).collect(),
    ))
}

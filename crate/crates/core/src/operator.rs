//! The Vladimirov-Pearson operator on scale-L locally constant functions.
//!
//! With `w = x ∧ y` the kernel is
//!
//! K(x, y) = d(x,y)^{s-3} / (μ([w])·(1 - 1/n_w))        (general)
//! K(x, y) = d(x,y)^{s-4} / (1 - 1/n_w)                  (diameter aligned)
//!
//! and `(D f)(x) = Σ_y K(x,y)·(f(x) - f(y))·μ(y)`. The operator is
//! nonnegative; its heat semigroup is `exp(-tD)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, pairwise_sum_complex};
use crate::tree::{Hierarchy, LeafPoint, Vertex};
use crate::wavelets::{analyze, BasisElement, FunctionVector, WaveletBasis, WaveletIndex};

pub const DEFAULT_MATRIX_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    General,
    DiameterAligned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorParams {
    pub s: f64,
    pub kernel_form: KernelForm,
}

impl OperatorParams {
    pub fn new(s: f64) -> Self {
        OperatorParams {
            s,
            kernel_form: KernelForm::General,
        }
    }

    pub fn aligned(s: f64) -> Self {
        OperatorParams {
            s,
            kernel_form: KernelForm::DiameterAligned,
        }
    }

    pub fn validate(&self, h: &Hierarchy) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!("s = {} is not finite", self.s)));
        }
        if self.kernel_form == KernelForm::DiameterAligned && !h.is_aligned() {
            return Err(Error::NotAligned);
        }
        Ok(())
    }
}

/// Both kernel forms at one pair of points.
#[derive(Clone, Debug, Serialize)]
pub struct KernelComparison {
    pub join: Vertex,
    pub distance: f64,
    pub general: f64,
    pub aligned: f64,
    pub tree_aligned: bool,
    /// The two forms differ by more than 1e-12 relative.
    pub mismatch: bool,
}

fn general_kernel(d: f64, mu: f64, n: u32, s: f64) -> f64 {
    d.powf(s - 3.0) / (mu * (1.0 - 1.0 / f64::from(n)))
}

fn aligned_kernel(d: f64, n: u32, s: f64) -> f64 {
    d.powf(s - 4.0) / (1.0 - 1.0 / f64::from(n))
}

/// The operator bound to a materialised tree, with the kernel value of every
/// ball precomputed.
#[derive(Clone, Debug)]
pub struct VpOperator<'a> {
    h: &'a Hierarchy,
    params: OperatorParams,
    /// Kernel on pairs joined at each internal node; 0 on leaves.
    kernel: Vec<f64>,
}

impl<'a> VpOperator<'a> {
    pub fn new(h: &'a Hierarchy, params: OperatorParams) -> Result<Self> {
        params.validate(h)?;
        let kernel = h
            .nodes()
            .iter()
            .map(|n| {
                if n.child_count == 0 {
                    0.0
                } else {
                    match params.kernel_form {
                        KernelForm::General => general_kernel(n.diameter, n.measure, n.child_count, params.s),
                        KernelForm::DiameterAligned => aligned_kernel(n.diameter, n.child_count, params.s),
                    }
                }
            })
            .collect();
        Ok(VpOperator { h, params, kernel })
    }

    pub fn hierarchy(&self) -> &'a Hierarchy {
        self.h
    }

    pub fn params(&self) -> OperatorParams {
        self.params
    }

    /// Kernel value attached to pairs whose join is `node`.
    pub fn node_kernel(&self, node: usize) -> f64 {
        self.kernel[node]
    }

    pub fn kernel_value(&self, x: &LeafPoint, y: &LeafPoint) -> Result<f64> {
        let (i, k) = (self.h.leaf_index(x)?, self.h.leaf_index(y)?);
        if i == k {
            return Err(Error::Diagonal(x.to_string()));
        }
        Ok(self.kernel[self.h.join(i, k)])
    }

    pub fn compare_kernels(&self, x: &LeafPoint, y: &LeafPoint) -> Result<KernelComparison> {
        let (i, k) = (self.h.leaf_index(x)?, self.h.leaf_index(y)?);
        if i == k {
            return Err(Error::Diagonal(x.to_string()));
        }
        let w = self.h.join(i, k);
        let n = self.h.node(w);
        let general = general_kernel(n.diameter, n.measure, n.child_count, self.params.s);
        let aligned = aligned_kernel(n.diameter, n.child_count, self.params.s);
        Ok(KernelComparison {
            join: self.h.address(w),
            distance: n.diameter,
            general,
            aligned,
            tree_aligned: self.h.is_aligned(),
            mismatch: (general - aligned).abs() > 1e-12 * general.abs().max(aligned.abs()),
        })
    }

    /// Hierarchical apply: for every leaf, walk the ancestor chain and use the
    /// ball sums of `f·μ` over the sibling balls of each annulus.
    pub fn apply(&self, f: &FunctionVector) -> Result<FunctionVector> {
        let h = self.h;
        check_len(f, h.leaf_count())?;
        let nodes = h.nodes();
        let mut sums = vec![Complex64::new(0.0, 0.0); nodes.len()];
        for leaf in 0..h.leaf_count() {
            let node = h.leaf_node(leaf);
            sums[node] = f.values[leaf] * nodes[node].measure;
        }
        for node in h.internal_nodes().rev() {
            sums[node] = h.children(node).map(|c| sums[c]).sum();
        }
        let values = (0..h.leaf_count())
            .into_par_iter()
            .map(|leaf| {
                let fi = f.values[leaf];
                let mut acc = Complex64::new(0.0, 0.0);
                let mut at = h.leaf_node(leaf);
                while let Some(parent) = nodes[at].parent {
                    let (mut mass, mut sum) = (0.0, Complex64::new(0.0, 0.0));
                    for c in h.children(parent).filter(|&c| c != at) {
                        mass += nodes[c].measure;
                        sum += sums[c];
                    }
                    acc += (fi * mass - sum) * self.kernel[parent];
                    at = parent;
                }
                acc
            })
            .collect();
        Ok(FunctionVector::new(values))
    }

    /// Reference O(N²) apply summing every pair explicitly.
    pub fn apply_direct(&self, f: &FunctionVector) -> Result<FunctionVector> {
        let h = self.h;
        let n = h.leaf_count();
        check_len(f, n)?;
        let mu = h.leaf_measures();
        let values = (0..n)
            .into_par_iter()
            .map(|i| {
                let terms: Vec<Complex64> = (0..n)
                    .filter(|&k| k != i)
                    .map(|k| (f.values[i] - f.values[k]) * (self.kernel[h.join(i, k)] * mu[k]))
                    .collect();
                pairwise_sum_complex(&terms)
            })
            .collect();
        Ok(FunctionVector::new(values))
    }

    pub fn assemble_matrix(&self) -> Result<OperatorMatrix> {
        self.assemble_matrix_capped(DEFAULT_MATRIX_CAP)
    }

    pub fn assemble_matrix_capped(&self, cap: usize) -> Result<OperatorMatrix> {
        let h = self.h;
        let n = h.leaf_count();
        if n > cap {
            return Err(Error::CapExceeded {
                what: "operator matrix dimension",
                size: n as u128,
                cap,
            });
        }
        let mu = h.leaf_measures();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|k| if k == i { 0.0 } else { -self.kernel[h.join(i, k)] * mu[k] })
                    .collect();
                row[i] = -pairwise_sum(&row);
                row
            })
            .collect();
        let entries = DMatrix::from_fn(n, n, |i, k| rows[i][k]);
        Ok(OperatorMatrix {
            entries,
            params: self.params,
        })
    }

    /// λ(w) by the ancestor annulus sum; `node` must be internal.
    pub fn lambda(&self, node: usize) -> f64 {
        let nodes = self.h.nodes();
        let w = &nodes[node];
        if self.h.is_aligned() {
            let s3 = self.params.s - 3.0;
            let mut total = w.diameter.powf(s3) / (1.0 - 1.0 / f64::from(w.child_count));
            let mut at = w.parent;
            while let Some(a) = at {
                total += nodes[a].diameter.powf(s3);
                at = nodes[a].parent;
            }
            total
        } else {
            let mut total = self.kernel[node] * w.measure;
            let mut at = w.parent;
            while let Some(a) = at {
                let n = f64::from(nodes[a].child_count);
                total += self.kernel[a] * nodes[a].measure * (1.0 - 1.0 / n);
                at = nodes[a].parent;
            }
            total
        }
    }

    /// The same eigenvalue split at a child `v` of `w`: `μ([v])·K_w` plus the
    /// mass of `C \ [v]` weighted by the kernel of each annulus, with annulus
    /// masses taken as measured differences.
    fn two_term(&self, node: usize, child: usize, kernel: impl Fn(usize) -> f64, first: f64) -> f64 {
        let nodes = self.h.nodes();
        let mut total = first;
        let mut inner = child;
        let mut at = Some(node);
        while let Some(a) = at {
            total += kernel(a) * (nodes[a].measure - nodes[inner].measure);
            inner = a;
            at = nodes[a].parent;
        }
        total
    }

    fn record(&self, node: usize) -> EigenvalueRecord {
        let h = self.h;
        let w = h.node(node);
        let s = self.params.s;
        let child = w.first_child;
        let mu_v = h.node(child).measure;
        let n = f64::from(w.child_count);
        let two_term = self.two_term(node, child, |a| self.kernel[a], mu_v * self.kernel[node]);
        let aligned = |a: usize| {
            let na = h.node(a);
            aligned_kernel(na.diameter, na.child_count, s)
        };
        let remark_form = self.two_term(
            node,
            child,
            aligned,
            w.diameter.powf(s - 4.0) / ((1.0 - 1.0 / n) * n),
        );
        EigenvalueRecord {
            support: h.address(node),
            level: w.level,
            lambda: self.lambda(node),
            multiplicity: w.child_count - 1,
            two_term,
            remark_form,
        }
    }

    pub fn eigenvalue_closed_form(&self, support: &Vertex) -> Result<EigenvalueRecord> {
        let node = self.h.node_of(support)?;
        if self.h.node(node).child_count == 0 {
            return Err(Error::LeafSupport(support.to_string()));
        }
        Ok(self.record(node))
    }

    /// Two-term value for every child of `support`; all entries agree with
    /// the eigenvalue.
    pub fn two_term_by_child(&self, support: &Vertex) -> Result<Vec<f64>> {
        let node = self.h.node_of(support)?;
        if self.h.node(node).child_count == 0 {
            return Err(Error::LeafSupport(support.to_string()));
        }
        Ok(self
            .h
            .children(node)
            .map(|c| self.two_term(node, c, |a| self.kernel[a], self.h.node(c).measure * self.kernel[node]))
            .collect())
    }

    /// One record per wavelet support, in basis order.
    pub fn closed_form_spectrum(&self) -> Vec<EigenvalueRecord> {
        self.h.internal_nodes().map(|node| self.record(node)).collect()
    }

    /// `{0} ∪ {λ(w) repeated n_w - 1 times}`, ascending.
    pub fn closed_form_eigenvalues(&self) -> Vec<f64> {
        let mut values = vec![0.0];
        for node in self.h.internal_nodes() {
            let lambda = self.lambda(node);
            for _ in 1..self.h.node(node).child_count {
                values.push(lambda);
            }
        }
        values.sort_by(f64::total_cmp);
        values
    }

    /// Closed-form spectrum matched against a dense symmetric eigensolve.
    pub fn compare_spectrum(&self, matrix: &OperatorMatrix) -> SpectrumComparison {
        let dense = matrix.dense_spectrum(self.h);
        // (lambda, owner) with owner None for the constant
        let mut tagged: Vec<(f64, Option<usize>)> = vec![(0.0, None)];
        let records = self.closed_form_spectrum();
        for (r, rec) in records.iter().enumerate() {
            for _ in 0..rec.multiplicity {
                tagged.push((rec.lambda, Some(r)));
            }
        }
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = tagged.last().map_or(1.0, |t| t.0.abs()).max(f64::MIN_POSITIVE);
        let mut worst_dense = vec![f64::NAN; records.len()];
        let mut constant_dense = f64::NAN;
        let mut max_rel_diff: f64 = 0.0;
        for ((lambda, owner), d) in tagged.iter().zip(&dense) {
            let denom = if *lambda == 0.0 { scale } else { lambda.abs() };
            max_rel_diff = max_rel_diff.max((d - lambda).abs() / denom);
            match owner {
                None => constant_dense = *d,
                Some(r) => {
                    let prev = worst_dense[*r];
                    if prev.is_nan() || (d - lambda).abs() > (prev - lambda).abs() {
                        worst_dense[*r] = *d;
                    }
                }
            }
        }
        let rows = records
            .into_iter()
            .zip(worst_dense)
            .map(|(record, dense)| SpectrumRow {
                abs_diff: (dense - record.lambda).abs(),
                dense,
                record,
            })
            .collect();
        SpectrumComparison {
            constant_dense,
            rows,
            dense,
            max_rel_diff,
        }
    }

    /// Conjugate the assembled matrix into wavelet coordinates.
    pub fn wavelet_matrix(&self, matrix: &OperatorMatrix, basis: &WaveletBasis) -> Result<WaveletMatrixReport> {
        let h = self.h;
        let n = h.leaf_count();
        check_len_usize(matrix.entries.nrows(), n)?;
        let columns: Vec<Vec<Complex64>> = (0..basis.len())
            .into_par_iter()
            .map(|b| {
                let phi = basis.element_vector(h, b);
                let mphi = matrix.mul(&phi);
                analyze(h, basis, &mphi).expect("dimension checked")
            })
            .collect();
        let mut max_off_diagonal: f64 = 0.0;
        for (b, col) in columns.iter().enumerate() {
            for (a, v) in col.iter().enumerate() {
                if a != b {
                    max_off_diagonal = max_off_diagonal.max(v.norm());
                }
            }
        }
        let mut rows = Vec::with_capacity(basis.len());
        let mut max_diagonal_deviation: f64 = 0.0;
        for (k, col) in columns.iter().enumerate() {
            let (index, closed_form) = match basis.element(k) {
                BasisElement::Constant => (None, 0.0),
                BasisElement::Wavelet { node, frequency } => {
                    (Some(WaveletIndex::new(h.address(node), frequency)), self.lambda(node))
                }
            };
            let diagonal = col[k];
            let deviation = (diagonal - closed_form).norm();
            max_diagonal_deviation = max_diagonal_deviation.max(deviation);
            rows.push(DiagonalRow {
                index,
                diagonal_re: diagonal.re,
                diagonal_im: diagonal.im,
                closed_form,
                deviation,
            });
        }
        Ok(WaveletMatrixReport {
            max_off_diagonal,
            max_diagonal_deviation,
            rows,
        })
    }

    pub fn boundedness_report(&self) -> Result<BoundednessReport> {
        let h = self.h;
        if h.depth() < 4 {
            return Err(Error::InvalidParameter(format!(
                "boundedness needs depth >= 4, got {}",
                h.depth()
            )));
        }
        let mut kernel_sup = Vec::with_capacity(h.depth());
        let mut max_lambda = Vec::with_capacity(h.depth());
        let mut min_lambda = Vec::with_capacity(h.depth());
        for level in 0..h.depth() {
            let (mut ks, mut hi, mut lo) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY);
            for node in h.level_nodes(level) {
                ks = ks.max(self.kernel[node]);
                let l = self.lambda(node);
                hi = hi.max(l);
                lo = lo.min(l);
            }
            kernel_sup.push(ks);
            max_lambda.push(hi);
            min_lambda.push(lo);
        }
        let kernel_trend = classify_trend(&kernel_sup);
        Ok(BoundednessReport {
            s: self.params.s,
            depth: h.depth(),
            kernel_sup_overall: kernel_sup.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            kernel_bounded: kernel_trend != Trend::Growing,
            kernel_trend,
            max_lambda_trend: classify_trend(&max_lambda),
            min_positive_lambda_trend: classify_trend(&min_lambda),
            kernel_sup_by_level: kernel_sup,
            max_lambda_by_level: max_lambda,
            min_positive_lambda_by_level: min_lambda,
        })
    }
}

fn check_len(f: &FunctionVector, expected: usize) -> Result<()> {
    check_len_usize(f.len(), expected)
}

fn check_len_usize(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Dense matrix of the operator in leaf coordinates.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub entries: DMatrix<f64>,
    pub params: OperatorParams,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mul(&self, f: &FunctionVector) -> FunctionVector {
        let re = DVector::from_iterator(f.len(), f.values.iter().map(|v| v.re));
        let im = DVector::from_iterator(f.len(), f.values.iter().map(|v| v.im));
        let (mr, mi) = (&self.entries * re, &self.entries * im);
        FunctionVector::new(mr.iter().zip(mi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    /// Largest |Σ_k M_ik| over rows.
    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `√μ_i · M_ik / √μ_k`, symmetric.
    pub fn symmetrized(&self, h: &Hierarchy) -> DMatrix<f64> {
        let root: Vec<f64> = h.leaf_measures().iter().map(|m| m.sqrt()).collect();
        DMatrix::from_fn(self.dim(), self.dim(), |i, k| root[i] * self.entries[(i, k)] / root[k])
    }

    /// Ascending eigenvalues from a dense symmetric eigensolve.
    pub fn dense_spectrum(&self, h: &Hierarchy) -> Vec<f64> {
        let mut values: Vec<f64> = SymmetricEigen::new(self.symmetrized(h)).eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenvalueRecord {
    pub support: Vertex,
    pub level: usize,
    pub lambda: f64,
    pub multiplicity: u32,
    /// Split at the first child `v`: `μ([v])·K_w` plus the exact annulus sum
    /// over `C \ [v]`.
    pub two_term: f64,
    /// The alternative form with `d^{s-4}/((1 - 1/n)·n)` as first term and the
    /// aligned kernel outside `[v]`; it agrees with `lambda` only when
    /// `d(v, v') = 1`.
    pub remark_form: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    pub record: EigenvalueRecord,
    /// Dense eigenvalue paired with this support, the worst of its block.
    pub dense: f64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumComparison {
    pub constant_dense: f64,
    pub rows: Vec<SpectrumRow>,
    pub dense: Vec<f64>,
    /// Max over sorted pairs of |dense - closed| / |closed|, with the largest
    /// eigenvalue as scale for the zero eigenvalue.
    pub max_rel_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagonalRow {
    pub index: Option<WaveletIndex>,
    pub diagonal_re: f64,
    pub diagonal_im: f64,
    pub closed_form: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveletMatrixReport {
    pub max_off_diagonal: f64,
    pub max_diagonal_deviation: f64,
    pub rows: Vec<DiagonalRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Constant,
    /// Increments shrink geometrically, the sequence settles.
    Converging,
    Growing,
    Decreasing,
}

/// Trend of a per-level sequence judged from its last three values.
pub fn classify_trend(values: &[f64]) -> Trend {
    let n = values.len();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let flat = values.windows(2).all(|w| (w[1] - w[0]).abs() <= 1e-9 * scale);
    if n < 3 || flat {
        return Trend::Constant;
    }
    let last = values[n - 1] - values[n - 2];
    let prev = values[n - 2] - values[n - 3];
    if prev != 0.0 && (last / prev).abs() < 1.0 - 1e-2 && last.signum() == prev.signum() {
        return Trend::Converging;
    }
    if last > 0.0 {
        Trend::Growing
    } else {
        Trend::Decreasing
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessReport {
    pub s: f64,
    pub depth: usize,
    pub kernel_sup_overall: f64,
    pub kernel_bounded: bool,
    pub kernel_trend: Trend,
    pub max_lambda_trend: Trend,
    pub min_positive_lambda_trend: Trend,
    pub kernel_sup_by_level: Vec<f64>,
    pub max_lambda_by_level: Vec<f64>,
    pub min_positive_lambda_by_level: Vec<f64>,
}

#[cfg(test)]
mod tests;

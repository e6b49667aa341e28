//! Heat semigroup `exp(-tD)`, its kernel, the Green function and the Sobolev
//! norm, all evaluated through the wavelet eigenbasis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{VpOperator, DEFAULT_MATRIX_CAP};
use crate::tree::Hierarchy;
use crate::wavelets::{analyze, enumerate_basis, norm, phase, synthesize, BasisElement, FunctionVector, WaveletBasis};

/// Eigenvalue of every basis element, constant first.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<'a> {
    op: &'a VpOperator<'a>,
    basis: WaveletBasis,
    eigenvalues: Vec<f64>,
    /// λ(w) per internal node.
    node_lambda: Vec<f64>,
}

impl<'a> SpectralDecomposition<'a> {
    pub fn new(op: &'a VpOperator<'a>) -> Self {
        let h = op.hierarchy();
        let basis = enumerate_basis(h);
        let node_lambda: Vec<f64> = h.internal_nodes().map(|n| op.lambda(n)).collect();
        let eigenvalues = basis
            .elements()
            .iter()
            .map(|e| match *e {
                BasisElement::Constant => 0.0,
                BasisElement::Wavelet { node, .. } => node_lambda[node],
            })
            .collect();
        SpectralDecomposition {
            op,
            basis,
            eigenvalues,
            node_lambda,
        }
    }

    pub fn operator(&self) -> &'a VpOperator<'a> {
        self.op
    }

    pub fn hierarchy(&self) -> &'a Hierarchy {
        self.op.hierarchy()
    }

    pub fn basis(&self) -> &WaveletBasis {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn node_lambda(&self) -> &[f64] {
        &self.node_lambda
    }

    /// Σ_k g(λ_k)·⟨f, φ_k⟩·φ_k.
    pub fn apply_function(&self, f: &FunctionVector, g: impl Fn(f64) -> f64) -> Result<FunctionVector> {
        let h = self.hierarchy();
        let mut coeffs = analyze(h, &self.basis, f)?;
        for (c, &lambda) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= g(lambda);
        }
        synthesize(h, &self.basis, &coeffs)
    }

    pub fn semigroup_apply(&self, f: &FunctionVector, t: f64) -> Result<FunctionVector> {
        check_time(t, false)?;
        self.apply_function(f, |lambda| (-lambda * t).exp())
    }

    /// `Σ_k weight(λ_k)·φ_k(x_i)·conj(φ_k(x_j))` over the leaves. Only wavelets
    /// supported on an ancestor of `x_i ∧ x_j` contribute; `constant` is the
    /// weight of the constant function.
    fn pair_sum(&self, constant: f64, weight: impl Fn(f64) -> f64 + Sync) -> PairMatrix {
        let h = self.hierarchy();
        let nodes = h.nodes();
        // cross[w][δ] = weight(λ_w)·Σ_j exp(2πi·j·δ/n_w) / μ_w
        let mut offsets = Vec::with_capacity(self.node_lambda.len());
        let mut cross = Vec::new();
        for w in h.internal_nodes() {
            let n = nodes[w].child_count;
            let scale = weight(self.node_lambda[w]) / nodes[w].measure;
            offsets.push(cross.len());
            for delta in 0..n {
                let s: Complex64 = (1..n).map(|j| phase(j, delta, n)).sum();
                cross.push(s * scale);
            }
        }
        let n = h.leaf_count();
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let chain = h.ancestors(i);
                // prefix[l] = constant + Σ over chain levels < l of the same-child term
                let mut prefix = Vec::with_capacity(chain.len());
                let mut acc = Complex64::new(constant, 0.0);
                prefix.push(acc);
                for &a in &chain[..chain.len() - 1] {
                    acc += cross[offsets[a]];
                    prefix.push(acc);
                }
                let mut row = Vec::with_capacity(n);
                let mut max_imag: f64 = 0.0;
                for k in 0..n {
                    let value = if k == i {
                        prefix[h.depth()]
                    } else {
                        let w = h.join(i, k);
                        let level = nodes[w].level;
                        let nw = nodes[w].child_count;
                        let ci = nodes[chain[level + 1]].child_index;
                        let ck = nodes[h.ancestor(k, level + 1)].child_index;
                        let delta = (ci + nw - ck) % nw;
                        prefix[level] + cross[offsets[w] + delta as usize]
                    };
                    max_imag = max_imag.max(value.im.abs());
                    row.push(value.re);
                }
                (row, max_imag)
            })
            .collect();
        let max_imag = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        PairMatrix {
            values: DMatrix::from_fn(n, n, |i, k| rows[i].0[k]),
            max_imag,
        }
    }

    pub fn heat_kernel(&self, t: f64) -> Result<HeatKernelEval> {
        check_time(t, true)?;
        let pm = self.pair_sum(1.0, |lambda| (-lambda * t).exp());
        Ok(HeatKernelEval {
            t,
            transition: weight_columns(&pm.values, &self.hierarchy().leaf_measures()),
            values: pm.values,
            max_imag: pm.max_imag,
        })
    }

    /// Green function `Σ_{λ>0} λ^{-1} φ(x)·conj(φ(y))`, gated by the level-sum
    /// ratio test.
    pub fn green_function(&self) -> Result<GreenEval> {
        self.green_function_capped(DEFAULT_MATRIX_CAP)
    }

    pub fn green_function_capped(&self, cap: usize) -> Result<GreenEval> {
        let h = self.hierarchy();
        let mut level_sums = vec![0.0; h.depth()];
        for w in h.internal_nodes() {
            let node = h.node(w);
            level_sums[node.level] += f64::from(node.child_count - 1) / self.node_lambda[w];
        }
        let (class, ratio) = classify_green(&level_sums);
        let mut eval = GreenEval {
            class,
            ratio,
            level_sums,
            values: None,
            identity_deviation: None,
        };
        if class == GreenClass::Convergent {
            let pm = self.pair_sum(0.0, |lambda| 1.0 / lambda);
            let m = self.op.assemble_matrix_capped(cap)?;
            let mu = h.leaf_measures();
            let g_op = weight_columns(&pm.values, &mu);
            let n = h.leaf_count();
            let target = DMatrix::from_fn(n, n, |i, k| if i == k { 1.0 } else { 0.0 } - mu[k]);
            eval.identity_deviation = Some((&m.entries * g_op - target).amax());
            eval.values = Some(pm.values);
        }
        Ok(eval)
    }

    pub fn sobolev_norm(&self, f: &FunctionVector) -> Result<SobolevNorm> {
        let h = self.hierarchy();
        let l2_part = norm(h, f)?;
        let grad_part = norm(h, &self.op.apply(f)?)?;
        let coeffs = analyze(h, &self.basis, f)?;
        let spectral: Vec<f64> = coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| (1.0 + l * l) * c.norm_sqr())
            .collect();
        Ok(SobolevNorm {
            l2_part,
            grad_part,
            total: l2_part.hypot(grad_part),
            spectral_total: crate::numeric::pairwise_sum(&spectral).sqrt(),
        })
    }

    /// Positivity, sub-Markov bound, conservation and L² contraction of the
    /// semigroup on random functions with values in [0, 1] and on leaf
    /// indicators.
    pub fn markov_checks(&self, t_list: &[f64], trials: usize, seed: u64) -> Result<MarkovReport> {
        let h = self.hierarchy();
        let n = h.leaf_count();
        let one = FunctionVector::constant(n, 1.0);
        let mut rows = Vec::with_capacity(t_list.len());
        for &t in t_list {
            check_time(t, false)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let conservation_error = self
                .semigroup_apply(&one, t)?
                .values
                .iter()
                .map(|v| (v - 1.0).norm())
                .fold(0.0, f64::max);
            let mut row = MarkovRow {
                t,
                trials: 0,
                min_value: f64::INFINITY,
                max_value: f64::NEG_INFINITY,
                conservation_error,
                max_contraction_excess: f64::NEG_INFINITY,
                passed_trials: 0,
                pass: false,
            };
            let mut inputs: Vec<FunctionVector> = (0..trials)
                .map(|_| FunctionVector::from_real(&(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
                .collect();
            inputs.push(FunctionVector::indicator(h, h.leaf_node(0)));
            for f in &inputs {
                let out = self.semigroup_apply(f, t)?;
                let lo = out.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
                let hi = out.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
                let excess = norm(h, &out)? - norm(h, f)?;
                row.trials += 1;
                row.min_value = row.min_value.min(lo);
                row.max_value = row.max_value.max(hi);
                row.max_contraction_excess = row.max_contraction_excess.max(excess);
                if lo >= -1e-10 && hi <= 1.0 + 1e-10 && excess <= 1e-12 {
                    row.passed_trials += 1;
                }
            }
            row.pass = row.passed_trials == row.trials && conservation_error <= 1e-12;
            rows.push(row);
        }
        let all_pass = rows.iter().all(|r| r.pass);
        Ok(MarkovReport { rows, all_pass })
    }
}

struct PairMatrix {
    values: DMatrix<f64>,
    max_imag: f64,
}

fn check_time(t: f64, strict: bool) -> Result<()> {
    if !t.is_finite() || t < 0.0 || (strict && t == 0.0) {
        let bound = if strict { "> 0" } else { ">= 0" };
        return Err(Error::InvalidParameter(format!("time t = {t} must be finite and {bound}")));
    }
    Ok(())
}

fn weight_columns(values: &DMatrix<f64>, mu: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(values.nrows(), values.ncols(), |i, k| values[(i, k)] * mu[k])
}

/// `exp(-tM)` of the assembled matrix by scaling and squaring.
pub fn matrix_exponential_oracle(op: &VpOperator, t: f64) -> Result<DMatrix<f64>> {
    matrix_exponential_oracle_capped(op, t, DEFAULT_MATRIX_CAP)
}

pub fn matrix_exponential_oracle_capped(op: &VpOperator, t: f64, cap: usize) -> Result<DMatrix<f64>> {
    check_time(t, false)?;
    let m = op.assemble_matrix_capped(cap)?;
    if t == 0.0 {
        return Ok(DMatrix::identity(m.dim(), m.dim()));
    }
    Ok((m.entries * -t).exp())
}

#[derive(Clone, Debug)]
pub struct HeatKernelEval {
    pub t: f64,
    /// H(t, x_i, x_k).
    pub values: DMatrix<f64>,
    /// p_t(i, k) = H(t, x_i, x_k)·μ_k.
    pub transition: DMatrix<f64>,
    /// Largest imaginary part dropped from the spectral sum.
    pub max_imag: f64,
}

impl HeatKernelEval {
    pub fn max_row_sum_error(&self) -> f64 {
        self.transition
            .row_iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.transition.min()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenClass {
    Convergent,
    Divergent,
    Indeterminate,
}

/// Ratio test on the last two level sums; within 1e-2 of 1 stays undecided.
pub fn classify_green(level_sums: &[f64]) -> (GreenClass, Option<f64>) {
    let n = level_sums.len();
    if n < 2 || level_sums[n - 2] <= 0.0 {
        return (GreenClass::Indeterminate, None);
    }
    let ratio = level_sums[n - 1] / level_sums[n - 2];
    let class = if ratio < 1.0 - 1e-2 {
        GreenClass::Convergent
    } else if ratio > 1.0 + 1e-2 {
        GreenClass::Divergent
    } else {
        GreenClass::Indeterminate
    };
    (class, Some(ratio))
}

#[derive(Clone, Debug)]
pub struct GreenEval {
    pub class: GreenClass,
    pub ratio: Option<f64>,
    /// Σ_{w on level l} (n_w - 1)/λ(w).
    pub level_sums: Vec<f64>,
    /// G(x_i, x_k), present for the convergent class.
    pub values: Option<DMatrix<f64>>,
    /// max |M·G_op - (I - P₀)| with G_op(i, k) = G(i, k)·μ_k.
    pub identity_deviation: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SobolevNorm {
    pub l2_part: f64,
    pub grad_part: f64,
    pub total: f64,
    /// (Σ (1 + λ²)|c_λ|²)^{1/2}
    pub spectral_total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovRow {
    pub t: f64,
    pub trials: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub conservation_error: f64,
    pub max_contraction_excess: f64,
    pub passed_trials: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovReport {
    pub rows: Vec<MarkovRow>,
    pub all_pass: bool,
}

#[cfg(test)]
mod tests;

//! Zeta Dirichlet series, abscissa of convergence, descendant sums κ_v, the
//! factorisation check, the equity (Connes) measure and sphere measures.
//!
//! Series are summed level by level: the level-ℓ term of ζ is
//! Σ_{v on level ℓ} diam(v)^s. Truncated sums can be corrected by the tail of
//! the infinite tree, which is exact when the tree continues periodically
//! (p-adic and level-regular families) and a geometric estimate otherwise.

use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::tree::{LeafPoint, MetricKind, TruncatedTree, Vertex};

/// Log growth rates within this distance of zero count as non-decaying;
/// they arise from rounding when the level terms are exactly constant.
const ROOT_TEST_FLOOR: f64 = 1e-12;

/// Default bisection bracket for the abscissa.
pub const DEFAULT_ABSCISSA_BRACKET: (f64, f64) = (0.0, 8.0);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaPartial {
    pub s: f64,
    pub level_terms: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl ZetaPartial {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Truncated ζ(s) over levels `0..=levels`.
pub fn zeta_partial(tree: &TruncatedTree, s: f64, levels: usize) -> Result<ZetaPartial> {
    if levels > tree.depth() {
        return Err(Error::InvalidParameter(format!(
            "asked for {levels} levels of a depth-{} tree",
            tree.depth()
        )));
    }
    let mut level_terms = tree.descendant_power_sums(&Vertex::root(), s)?;
    level_terms.truncate(levels + 1);
    let cumulative = level_terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    Ok(ZetaPartial {
        s,
        level_terms,
        cumulative,
    })
}

/// κ_v(s) truncated at the tree depth: Σ diam(w)^s over the descendants of `v`, `v` included.
pub fn kappa(tree: &TruncatedTree, v: &Vertex, s: f64) -> Result<f64> {
    Ok(pairwise_sum(&tree.descendant_power_sums(v, s)?))
}

/// A truncated series together with the estimated sum of its missing levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailCorrected {
    pub truncated: f64,
    /// `f64::INFINITY` when the continued series diverges.
    pub tail: f64,
    /// True when the tail comes from the known continuation of the tree.
    pub exact_tail: bool,
}

impl TailCorrected {
    pub fn corrected(&self) -> f64 {
        self.truncated + self.tail
    }
}

/// Multiplier `F` such that the levels below the truncation contribute
/// `F · (last level term)`, for any vertex.
#[derive(Clone, Copy, Debug)]
struct TailModel {
    factor: f64,
    exact: bool,
}

fn tail_model(tree: &TruncatedTree, s: f64) -> Result<TailModel> {
    if let Some(list) = tree.periodic_branching() {
        let depth = tree.depth();
        let growth = |l: usize| {
            let b = f64::from(list[l % list.len()]);
            match tree.metric() {
                MetricKind::Baire => b * 0.5f64.powf(s),
                _ => b.powf(1.0 - s),
            }
        };
        let mut product = 1.0;
        let mut partial = 0.0;
        for k in 0..list.len() {
            product *= growth(depth + k);
            partial += product;
        }
        let factor = if product < 1.0 {
            partial / (1.0 - product)
        } else {
            f64::INFINITY
        };
        return Ok(TailModel {
            factor,
            exact: true,
        });
    }
    let logs = tree.descendant_log_power_sums(&Vertex::root(), s)?;
    let n = logs.len();
    let rho = (logs[n - 1] - logs[n - 2]).exp();
    let factor = if rho < 1.0 {
        rho / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    Ok(TailModel {
        factor,
        exact: false,
    })
}

fn corrected_series(tree: &TruncatedTree, v: &Vertex, s: f64, model: TailModel) -> Result<TailCorrected> {
    let terms = tree.descendant_power_sums(v, s)?;
    let last = *terms.last().expect("at least the vertex itself");
    Ok(TailCorrected {
        truncated: pairwise_sum(&terms),
        tail: if model.factor.is_finite() {
            last * model.factor
        } else {
            f64::INFINITY
        },
        exact_tail: model.exact,
    })
}

pub fn kappa_with_tail(tree: &TruncatedTree, v: &Vertex, s: f64) -> Result<TailCorrected> {
    corrected_series(tree, v, s, tail_model(tree, s)?)
}

pub fn zeta_with_tail(tree: &TruncatedTree, s: f64) -> Result<TailCorrected> {
    kappa_with_tail(tree, &Vertex::root(), s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Convergence {
    Converges,
    Diverges,
    Inconclusive,
}

/// Root test on the deepest levels: the series converges when the level
/// terms shrink geometrically there.
///
/// Two windows ending at the deepest level are used (half and a quarter of
/// the depth, rounded down to the level period); disagreement between them
/// is reported as [`Convergence::Inconclusive`].
pub fn classify_convergence(tree: &TruncatedTree, s: f64) -> Result<Convergence> {
    let depth = tree.depth();
    let q = tree.level_period();
    let windows: Vec<usize> = [depth / 2, depth / 4]
        .iter()
        .map(|w| (w / q) * q)
        .filter(|&w| w > 0)
        .collect();
    if windows.is_empty() {
        return Ok(Convergence::Inconclusive);
    }
    let logs = tree.descendant_log_power_sums(&Vertex::root(), s)?;
    let last = logs[depth];
    let verdicts: Vec<bool> = windows
        .iter()
        .map(|&w| (last - logs[depth - w]) / (w as f64) < -ROOT_TEST_FLOOR)
        .collect();
    Ok(if verdicts.iter().all(|&c| c) {
        Convergence::Converges
    } else if verdicts.iter().all(|&c| !c) {
        Convergence::Diverges
    } else {
        Convergence::Inconclusive
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbscissaEstimate {
    pub s0: f64,
    pub bracket: (f64, f64),
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum AbscissaOutcome {
    Estimated(AbscissaEstimate),
    Indeterminate { reason: String },
}

impl AbscissaOutcome {
    pub fn estimate(&self) -> Option<&AbscissaEstimate> {
        match self {
            AbscissaOutcome::Estimated(e) => Some(e),
            AbscissaOutcome::Indeterminate { .. } => None,
        }
    }
}

pub fn estimate_abscissa(tree: &TruncatedTree, tolerance: f64) -> Result<AbscissaOutcome> {
    estimate_abscissa_in(tree, tolerance, DEFAULT_ABSCISSA_BRACKET)
}

/// Bisection on [`classify_convergence`] inside `bracket`.
pub fn estimate_abscissa_in(
    tree: &TruncatedTree,
    tolerance: f64,
    bracket: (f64, f64),
) -> Result<AbscissaOutcome> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "abscissa tolerance must be positive, got {tolerance}"
        )));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "empty abscissa bracket [{lo}, {hi}]"
        )));
    }
    let indeterminate = |reason: String| Ok(AbscissaOutcome::Indeterminate { reason });
    match (classify_convergence(tree, lo)?, classify_convergence(tree, hi)?) {
        (Convergence::Diverges, Convergence::Converges) => {}
        (Convergence::Converges, _) => {
            return indeterminate(format!("series already converges at s = {lo}"))
        }
        (_, Convergence::Diverges) => {
            return indeterminate(format!("series still diverges at s = {hi}"))
        }
        _ => {
            return indeterminate(format!(
                "depth {} is too shallow to classify the bracket ends",
                tree.depth()
            ))
        }
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        match classify_convergence(tree, mid)? {
            Convergence::Converges => hi = mid,
            Convergence::Diverges => lo = mid,
            Convergence::Inconclusive => {
                return indeterminate(format!(
                    "level terms give conflicting root tests at s = {mid} (bracket [{lo}, {hi}])"
                ))
            }
        }
    }
    Ok(AbscissaOutcome::Estimated(AbscissaEstimate {
        s0: 0.5 * (lo + hi),
        bracket: (lo, hi),
        tolerance,
    }))
}

/// Where the abscissa used by the factorisation check comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum S0Choice {
    Pinned(f64),
    Estimated { tolerance: f64 },
}

impl S0Choice {
    fn resolve(self, tree: &TruncatedTree) -> Result<f64> {
        match self {
            S0Choice::Pinned(s0) => Ok(s0),
            S0Choice::Estimated { tolerance } => match estimate_abscissa(tree, tolerance)? {
                AbscissaOutcome::Estimated(e) => Ok(e.s0),
                AbscissaOutcome::Indeterminate { reason } => Err(Error::InvalidParameter(format!(
                    "abscissa could not be estimated: {reason}"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorisationRow {
    pub vertex: Vertex,
    pub s: f64,
    /// Tail-corrected κ_v(s) / ζ(s).
    pub ratio: f64,
    /// diam(v)^(s - s0 + 1).
    pub expected: f64,
    pub deviation: f64,
    /// Deviation of the uncorrected truncated sums.
    pub raw_deviation: f64,
    /// Size of the tail correction relative to the corrected κ_v.
    pub tail_fraction: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorisationReport {
    pub s0: f64,
    pub tolerance: f64,
    pub exact_tail: bool,
    pub rows: Vec<FactorisationRow>,
    pub offending: Vec<Vertex>,
}

impl FactorisationReport {
    pub fn passed(&self) -> bool {
        self.offending.is_empty()
    }

    pub fn max_deviation(&self) -> f64 {
        self.rows.iter().map(|r| r.deviation).fold(0.0, f64::max)
    }
}

/// Vertices examined by the diagnostics: all of them for small trees, else
/// first/middle/last per level.
fn diagnostic_vertices(tree: &TruncatedTree) -> Vec<Vertex> {
    const ALL_UP_TO: usize = 4096;
    tree.vertices(ALL_UP_TO)
        .unwrap_or_else(|_| tree.sample_vertices())
}

/// Compare κ_v(s)/ζ(s) with diam(v)^(s - s0 + 1) for each grid value of `s`.
pub fn check_factorisation(
    tree: &TruncatedTree,
    s_grid: &[f64],
    tolerance: f64,
    s0: S0Choice,
) -> Result<FactorisationReport> {
    let s0 = s0.resolve(tree)?;
    if let Some(s) = s_grid.iter().find(|&&s| s <= s0) {
        return Err(Error::InvalidParameter(format!(
            "factorisation needs s above the abscissa {s0}, got {s}"
        )));
    }
    let vertices = diagnostic_vertices(tree);
    let mut rows = Vec::new();
    let mut offending: Vec<Vertex> = Vec::new();
    let mut exact_tail = true;
    for &s in s_grid {
        let model = tail_model(tree, s)?;
        exact_tail &= model.exact;
        let zeta = corrected_series(tree, &Vertex::root(), s, model)?;
        for v in &vertices {
            let kappa = corrected_series(tree, v, s, model)?;
            let expected = crate::numeric::ratio_to_f64(&tree.diameter(v)?).powf(s - s0 + 1.0);
            let ratio = kappa.corrected() / zeta.corrected();
            let deviation = ((ratio - expected) / expected).abs();
            let raw = kappa.truncated / zeta.truncated;
            let pass = deviation < tolerance;
            if !pass && !offending.contains(v) {
                offending.push(v.clone());
            }
            rows.push(FactorisationRow {
                vertex: v.clone(),
                s,
                ratio,
                expected,
                deviation,
                raw_deviation: ((raw - expected) / expected).abs(),
                tail_fraction: kappa.tail / kappa.corrected(),
                pass,
            });
        }
    }
    Ok(FactorisationReport {
        s0,
        tolerance,
        exact_tail,
        rows,
        offending,
    })
}

/// Equity measure of every ball, by level then address. The recursion
/// μ(root) = 1, μ(child) = μ(parent)/childCount is computed at tree build.
pub fn connes_measure(tree: &TruncatedTree, cap: usize) -> Result<Vec<(Vertex, BigRational)>> {
    tree.vertices(cap)?
        .into_iter()
        .map(|v| tree.measure(&v).map(|m| (v, m)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRow {
    pub eps: f64,
    pub ratio: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnesLimitReport {
    pub vertex: Vertex,
    pub target: f64,
    pub rows: Vec<LimitRow>,
    /// Distances to the target shrink as ε decreases.
    pub monotone: bool,
}

/// κ_v(s0 + ε) / ζ(s0 + ε) for each ε, against the equity measure of `v`.
pub fn connes_measure_limit_check(
    tree: &TruncatedTree,
    v: &Vertex,
    s0: f64,
    eps_list: &[f64],
) -> Result<ConnesLimitReport> {
    let target = crate::numeric::ratio_to_f64(&tree.measure(v)?);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
        }
        let s = s0 + eps;
        let model = tail_model(tree, s)?;
        let ratio = corrected_series(tree, v, s, model)?.corrected()
            / corrected_series(tree, &Vertex::root(), s, model)?.corrected();
        rows.push(LimitRow {
            eps,
            ratio,
            distance: (ratio - target).abs(),
        });
    }
    let mut by_eps: Vec<&LimitRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let monotone = by_eps
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance * (1.0 + 1e-12) + 1e-15);
    Ok(ConnesLimitReport {
        vertex: v.clone(),
        target,
        rows,
        monotone,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereMeasure {
    pub center: LeafPoint,
    pub radius: BigRational,
    /// Ancestor `w` of the center with diam(w) = radius.
    pub ancestor: Vertex,
    /// μ(w)·(1 − 1/n_w).
    pub value: BigRational,
    /// (1 − 1/n_w)·radius, the value when measure and diameter agree.
    pub aligned_value: BigRational,
    pub aligned: bool,
}

/// Measure of the sphere of the given radius around a leaf.
pub fn sphere_measure(
    tree: &TruncatedTree,
    center: &LeafPoint,
    radius: &BigRational,
) -> Result<SphereMeasure> {
    let z = center.vertex();
    tree.leaf(z.clone())?;
    let mut below: Option<BigRational> = None;
    let mut above: Option<BigRational> = None;
    for level in (0..tree.depth()).rev() {
        let w = z.ancestor(level).expect("level within the leaf's depth");
        let ball = tree.ball(&w)?;
        if &ball.diameter == radius {
            let keep = BigRational::one() - BigRational::new(1.into(), ball.child_count.into());
            let value = &ball.measure * &keep;
            let aligned_value = radius * &keep;
            return Ok(SphereMeasure {
                center: center.clone(),
                radius: radius.clone(),
                ancestor: w,
                aligned: value == aligned_value,
                value,
                aligned_value,
            });
        }
        if &ball.diameter < radius {
            below = Some(ball.diameter);
        } else if above.is_none() {
            above = Some(ball.diameter);
        }
    }
    let show = |x: Option<BigRational>| x.map_or_else(|| "none".to_string(), |r| r.to_string());
    if !radius.is_positive() {
        return Err(Error::InvalidParameter(format!("radius {radius} is not positive")));
    }
    Err(Error::RadiusNotAttained {
        center: z.to_string(),
        radius: radius.to_string(),
        below: show(below),
        above: show(above),
    })
}

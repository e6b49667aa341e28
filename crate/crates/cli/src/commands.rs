//! One function per subcommand; each computes its results and writes them
//! into the output set.

use std::collections::BTreeMap;

use serde::Serialize;
use ultrametric_vp::checks::{run_checks, CheckSettings, CheckStatus};
use ultrametric_vp::heat::SpectralDecomposition;
use ultrametric_vp::measure_zeta::{
    classify_convergence, connes_measure, estimate_abscissa, zeta_partial, zeta_with_tail, AbscissaOutcome,
};
use ultrametric_vp::operator::{OperatorParams, VpOperator};
use ultrametric_vp::process::{build_rates, sample_paths, tv_distance};
use ultrametric_vp::tree::{Hierarchy, TreeSpec, TruncatedTree};
use ultrametric_vp::wavelets::{enumerate_basis, BasisElement};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, OutputSet};

/// Vertices listed by `measure`.
pub const MEASURE_VERTEX_CAP: usize = 1 << 20;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub spec: &'a TreeSpec,
    pub tree: &'a TruncatedTree,
}

impl Context<'_> {
    fn params(&self) -> OperatorParams {
        OperatorParams {
            s: self.config.s,
            kernel_form: self.config.kernel_form,
        }
    }

    /// Materialised tree, limited to `matrix_cap` leaves.
    fn hierarchy(&self) -> Result<Hierarchy, CliError> {
        let cap = self.config.matrix_cap;
        if self.tree.leaf_count() > cap as u128 {
            return Err(ultrametric_vp::Error::CapExceeded {
                what: "leaf count",
                size: self.tree.leaf_count(),
                cap,
            }
            .into());
        }
        Ok(Hierarchy::new(self.tree)?)
    }
}

pub fn zeta(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let tree = ctx.tree;
    let s = ctx.config.s;
    let partial = zeta_partial(tree, s, tree.depth())?;
    out.write_csv(
        "zeta.csv",
        &["level", "term", "cumulative"],
        partial
            .level_terms
            .iter()
            .zip(&partial.cumulative)
            .enumerate()
            .map(|(l, (t, c))| vec![l.to_string(), num(*t), num(*c)]),
    )?;
    #[derive(Serialize)]
    struct Summary {
        s: f64,
        depth: usize,
        truncated: f64,
        /// null when the continued series diverges
        tail: Option<f64>,
        corrected: Option<f64>,
        exact_tail: bool,
        convergence: String,
        abscissa: AbscissaOutcome,
    }
    let tail = zeta_with_tail(tree, s)?;
    let finite = |x: f64| x.is_finite().then_some(x);
    out.write_json(
        "zeta.json",
        &Summary {
            s,
            depth: tree.depth(),
            truncated: tail.truncated,
            tail: finite(tail.tail),
            corrected: finite(tail.corrected()),
            exact_tail: tail.exact_tail,
            convergence: format!("{:?}", classify_convergence(tree, s)?),
            abscissa: estimate_abscissa(tree, ctx.config.abscissa_tolerance)?,
        },
    )
}

pub fn measure(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let rows = connes_measure(ctx.tree, MEASURE_VERTEX_CAP)?
        .into_iter()
        .map(|(v, m)| {
            let d = ctx.tree.diameter(&v).expect("listed vertex");
            vec![v.to_string(), v.level().to_string(), d.to_string(), m.to_string()]
        })
        .collect::<Vec<_>>();
    out.write_csv("measure.csv", &["address", "level", "diameter", "measure"], rows)
}

/// The constant element is written with support `""` and `j = 0`.
pub fn wavelets(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let h = ctx.hierarchy()?;
    let basis = enumerate_basis(&h);
    let mut rows = Vec::new();
    for k in 0..basis.len() {
        let (support, j, leaves) = match basis.element(k) {
            BasisElement::Constant => (String::new(), 0, 0..h.leaf_count()),
            BasisElement::Wavelet { node, frequency } => {
                (h.address(node).to_string(), frequency, h.node(node).leaves.clone())
            }
        };
        let values = basis.element_vector(&h, k);
        for leaf in leaves {
            let v = values.values[leaf];
            rows.push(vec![
                support.clone(),
                j.to_string(),
                h.leaf_address(leaf).to_string(),
                num(v.re),
                num(v.im),
            ]);
        }
    }
    out.write_csv("wavelets.csv", &["support_address", "j", "leaf_address", "re", "im"], rows)
}

pub fn spectrum(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let h = ctx.hierarchy()?;
    let op = VpOperator::new(&h, ctx.params())?;
    let matrix = op.assemble_matrix_capped(ctx.config.matrix_cap)?;
    let cmp = op.compare_spectrum(&matrix);
    let mut rows = vec![vec![
        "constant".to_string(),
        String::new(),
        "1".to_string(),
        num(0.0),
        num(cmp.constant_dense),
        num(cmp.constant_dense.abs()),
    ]];
    for r in &cmp.rows {
        rows.push(vec![
            r.record.support.to_string(),
            r.record.level.to_string(),
            r.record.multiplicity.to_string(),
            num(r.record.lambda),
            num(r.dense),
            num(r.abs_diff),
        ]);
    }
    out.write_csv(
        "spectrum.csv",
        &[
            "support_address",
            "level",
            "multiplicity",
            "lambda_closed_form",
            "lambda_dense_oracle",
            "abs_diff",
        ],
        rows,
    )?;
    #[derive(Serialize)]
    struct Summary<'a> {
        params: OperatorParams,
        dimension: usize,
        max_rel_diff: f64,
        max_two_term_deviation: f64,
        remark_form: Vec<(String, f64)>,
        boundedness: Option<ultrametric_vp::operator::BoundednessReport>,
        note: &'a str,
    }
    let two_term = cmp
        .rows
        .iter()
        .map(|r| (r.record.two_term - r.record.lambda).abs())
        .fold(0.0, f64::max);
    let boundedness = op.boundedness_report().ok();
    if boundedness.is_none() {
        out.warn("boundedness report needs depth >= 4; omitted");
    }
    out.write_json(
        "spectrum.json",
        &Summary {
            params: ctx.params(),
            dimension: h.leaf_count(),
            max_rel_diff: cmp.max_rel_diff,
            max_two_term_deviation: two_term,
            remark_form: cmp
                .rows
                .iter()
                .map(|r| (r.record.support.to_string(), r.record.remark_form))
                .collect(),
            boundedness,
            note: "remark_form uses exponent s-4 in the first term and matches lambda only where d(v, v') = 1",
        },
    )
}

fn pair_rows(h: &Hierarchy, value: impl Fn(usize, usize) -> f64) -> Vec<Vec<String>> {
    let n = h.leaf_count();
    let addresses: Vec<String> = (0..n).map(|i| h.leaf_address(i).to_string()).collect();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            rows.push(vec![addresses[i].clone(), addresses[k].clone(), num(value(i, k))]);
        }
    }
    rows
}

pub fn heat(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    if ctx.config.times.is_empty() {
        out.warn("no times configured; no heat kernel written");
        return Ok(());
    }
    let h = ctx.hierarchy()?;
    let op = VpOperator::new(&h, ctx.params())?;
    let sd = SpectralDecomposition::new(&op);
    #[derive(Serialize)]
    struct Entry {
        t: f64,
        file: String,
        max_row_sum_error: f64,
        min_entry: f64,
    }
    let mut entries = Vec::new();
    for (i, &t) in ctx.config.times.iter().enumerate() {
        let hk = sd.heat_kernel(t)?;
        let file = format!("heat_{i:03}.csv");
        out.write_csv(&file, &["row_address", "col_address", "value"], pair_rows(&h, |i, k| hk.transition[(i, k)]))?;
        entries.push(Entry {
            t,
            file,
            max_row_sum_error: hk.max_row_sum_error(),
            min_entry: hk.min_entry(),
        });
    }
    out.write_json("heat.json", &entries)
}

pub fn green(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let h = ctx.hierarchy()?;
    let op = VpOperator::new(&h, ctx.params())?;
    let g = SpectralDecomposition::new(&op).green_function_capped(ctx.config.matrix_cap)?;
    if let Some(values) = &g.values {
        out.write_csv("green.csv", &["row_address", "col_address", "value"], pair_rows(&h, |i, k| values[(i, k)]))?;
    } else {
        out.warn(format!("Green function class is {:?}; green.csv not written", g.class));
    }
    #[derive(Serialize)]
    struct Sidecar<'a> {
        s: f64,
        depth: usize,
        convergence_class: ultrametric_vp::heat::GreenClass,
        ratio: Option<f64>,
        level_sums: &'a [f64],
        identity_deviation: Option<f64>,
    }
    out.write_json(
        "green.json",
        &Sidecar {
            s: ctx.config.s,
            depth: h.depth(),
            convergence_class: g.class,
            ratio: g.ratio,
            level_sums: &g.level_sums,
            identity_deviation: g.identity_deviation,
        },
    )
}

pub fn simulate(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let h = ctx.hierarchy()?;
    let sim = &ctx.config.simulate;
    let x0 = match &sim.x0 {
        Some(addr) => h.leaf_index(&ctx.tree.leaf_at(addr)?)?,
        None => 0,
    };
    let op = VpOperator::new(&h, ctx.params())?;
    let sd = SpectralDecomposition::new(&op);
    let analytic: Vec<f64> = sd.heat_kernel(sim.horizon)?.transition.row(x0).iter().copied().collect();
    let empirical = sample_paths(&build_rates(&op), x0, sim.horizon, sim.paths, ctx.config.seed)?;
    let tv = tv_distance(&empirical.distribution(), &analytic)?;
    #[derive(Serialize)]
    struct Report {
        depth: usize,
        s: f64,
        x0: String,
        horizon: f64,
        paths: u64,
        seed: u64,
        counts: BTreeMap<String, u64>,
        analytic: BTreeMap<String, f64>,
        tv_distance: f64,
    }
    let address = |i: usize| h.leaf_address(i).to_string();
    out.write_json(
        "simulate.json",
        &Report {
            depth: h.depth(),
            s: ctx.config.s,
            x0: address(x0),
            horizon: sim.horizon,
            paths: sim.paths,
            seed: ctx.config.seed,
            counts: empirical.counts.iter().enumerate().map(|(i, &c)| (address(i), c)).collect(),
            analytic: analytic.iter().enumerate().map(|(i, &p)| (address(i), p)).collect(),
            tv_distance: tv,
        },
    )
}

pub fn check(ctx: &Context, out: &mut OutputSet) -> Result<(), CliError> {
    let mut settings = CheckSettings::new(ctx.params());
    settings.times = ctx.config.times.clone();
    settings.seed = ctx.config.seed;
    settings.paths = ctx.config.simulate.paths;
    settings.horizon = ctx.config.simulate.horizon;
    settings.tolerances = ctx.config.tolerances.clone();
    let results = run_checks(ctx.spec, &settings)?;
    for r in &results {
        let status = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let measured = match (r.value, r.tolerance) {
            (Some(v), Some(t)) => format!(" [{v:.3e} <= {t:.1e}]"),
            _ => String::new(),
        };
        println!("{status} {:<28} {}{measured}", r.name, r.detail);
        if r.status == CheckStatus::Skipped {
            out.warn(format!("{} skipped: {}", r.name, r.detail));
        }
    }
    out.write_json("check.json", &results)?;
    let failed: Vec<&str> = results.iter().filter(|r| r.status == CheckStatus::Fail).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed {
            failed: failed.len(),
            names: failed.join(", "),
        })
    }
}

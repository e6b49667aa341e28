use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tree::{build_tree, DiameterSpec, Metric, TreeSpec, TruncatedTree};
use crate::wavelets::{enumerate_basis, inner};

fn setup(spec: TreeSpec) -> (TruncatedTree, Hierarchy) {
    let tree = build_tree(&spec).unwrap();
    let h = Hierarchy::new(&tree).unwrap();
    (tree, h)
}

fn random_function(rng: &mut ChaCha8Rng, n: usize) -> FunctionVector {
    FunctionVector::new(
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
}

fn families(depth: usize) -> Vec<TreeSpec> {
    vec![
        TreeSpec::padic(2, depth),
        TreeSpec::padic(3, depth.min(3)),
        TreeSpec::level_regular(vec![2, 3], depth),
        TreeSpec::random_bounded(2, 4, 9, depth.min(3)),
        TreeSpec::padic(2, depth).with_metric(Metric::Baire),
        TreeSpec::level_regular(vec![3, 2], depth.min(3)).with_metric(Metric::Baire),
    ]
}

#[test]
fn kernel_values_binary_tree() {
    let (tree, h) = setup(TreeSpec::padic(2, 2));
    let x = tree.leaf_at("0.0").unwrap();
    let y = tree.leaf_at("0.1").unwrap();
    let z = tree.leaf_at("1.1").unwrap();
    let op3 = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    assert!((op3.kernel_value(&x, &y).unwrap() - 4.0).abs() < 1e-12);
    let op4 = VpOperator::new(&h, OperatorParams::aligned(4.0)).unwrap();
    for (a, b) in [(&x, &y), (&x, &z), (&y, &z)] {
        assert!((op4.kernel_value(a, b).unwrap() - 2.0).abs() < 1e-12);
    }
    assert!(matches!(op3.kernel_value(&x, &x), Err(Error::Diagonal(_))));
    assert!(!op3.compare_kernels(&x, &z).unwrap().mismatch);
}

#[test]
fn baire_kernel_mismatch() {
    let s = 2.5;
    let (tree, h) = setup(TreeSpec::padic(3, 2).with_metric(Metric::Baire));
    assert!(matches!(VpOperator::new(&h, OperatorParams::aligned(s)), Err(Error::NotAligned)));
    let op = VpOperator::new(&h, OperatorParams::new(s)).unwrap();
    let x = tree.leaf_at("0.0").unwrap();
    let y = tree.leaf_at("0.2").unwrap();
    let cmp = op.compare_kernels(&x, &y).unwrap();
    let general = 0.5f64.powf(s - 3.0) / ((1.0 / 3.0) * (2.0 / 3.0));
    let aligned = 0.5f64.powf(s - 4.0) / (2.0 / 3.0);
    assert!((cmp.general - general).abs() < 1e-12 * general);
    assert!((cmp.aligned - aligned).abs() < 1e-12 * aligned);
    assert!(cmp.mismatch && !cmp.tree_aligned);
}

#[test]
fn smallest_matrix() {
    let (_, h) = setup(TreeSpec::padic(2, 1));
    let m = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap().assemble_matrix().unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    assert!((m.entries - expected).amax() < 1e-14);
}

#[test]
fn binary_spectrum_at_s3() {
    let (_, h) = setup(TreeSpec::padic(2, 2));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let m = op.assemble_matrix().unwrap();
    let dense = m.dense_spectrum(&h);
    for (d, e) in dense.iter().zip([0.0, 2.0, 3.0, 3.0]) {
        assert!((d - e).abs() < 1e-12, "{dense:?}");
    }
    let root = op.eigenvalue_closed_form(&Vertex::root()).unwrap();
    assert!((root.lambda - 2.0).abs() < 1e-14);
    let one = op.eigenvalue_closed_form(&"1".parse().unwrap()).unwrap();
    assert!((one.lambda - 3.0).abs() < 1e-14);
    assert_eq!(one.multiplicity, 1);
    assert!(matches!(
        op.eigenvalue_closed_form(&"1.0".parse().unwrap()),
        Err(Error::LeafSupport(_))
    ));
}

#[test]
fn constant_spectrum_at_s4() {
    let (_, h) = setup(TreeSpec::padic(2, 4));
    let op = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap();
    for rec in op.closed_form_spectrum() {
        assert!((rec.lambda - 2.0).abs() < 1e-12);
        assert!((rec.two_term - 2.0).abs() < 1e-12);
    }
    // D = 2(I - mean)
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random_function(&mut rng, h.leaf_count());
    let mean = f.values.iter().sum::<Complex64>() / h.leaf_count() as f64;
    let df = op.apply(&f).unwrap();
    for (d, v) in df.values.iter().zip(&f.values) {
        assert!((d - (v - mean) * 2.0).norm() < 1e-12);
    }
}

#[test]
fn remark_form_differs_below_top_level() {
    let (_, h) = setup(TreeSpec::padic(2, 3));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let root = op.eigenvalue_closed_form(&Vertex::root()).unwrap();
    assert!((root.remark_form - root.lambda).abs() < 1e-12);
    let deep = op.eigenvalue_closed_form(&"0.1".parse().unwrap()).unwrap();
    assert!((deep.two_term - deep.lambda).abs() < 1e-12);
    assert!((deep.remark_form - deep.lambda).abs() > 0.1);
}

#[test]
fn two_term_is_independent_of_child() {
    for spec in families(3) {
        let (_, h) = setup(spec);
        for s in [1.5, 3.0, 4.5] {
            let op = VpOperator::new(&h, OperatorParams::new(s)).unwrap();
            for node in h.internal_nodes() {
                let v = h.address(node);
                let lambda = op.eigenvalue_closed_form(&v).unwrap().lambda;
                for t in op.two_term_by_child(&v).unwrap() {
                    assert!((t - lambda).abs() <= 1e-12 * lambda);
                }
            }
        }
    }
}

#[test]
fn aligned_form_matches_general_on_aligned_trees() {
    let (_, h) = setup(TreeSpec::level_regular(vec![2, 3], 3));
    let general = VpOperator::new(&h, OperatorParams::new(2.5)).unwrap();
    let aligned = VpOperator::new(&h, OperatorParams::aligned(2.5)).unwrap();
    let a = general.assemble_matrix().unwrap().entries;
    let b = aligned.assemble_matrix().unwrap().entries;
    assert!((a - &b).amax() <= 1e-12 * b.amax());
}

#[test]
fn spectrum_matches_dense_oracle() {
    for spec in families(4) {
        let (_, h) = setup(spec);
        for s in [1.5, 2.0, 3.0, 3.5, 4.0, 5.0] {
            let op = VpOperator::new(&h, OperatorParams::new(s)).unwrap();
            let m = op.assemble_matrix().unwrap();
            assert!(m.max_row_sum() <= 1e-12 * m.entries.amax());
            let cmp = op.compare_spectrum(&m);
            assert!(cmp.max_rel_diff < 1e-9, "s={s}: {}", cmp.max_rel_diff);
            assert_eq!(cmp.dense.len(), h.leaf_count());
        }
    }
}

#[test]
fn off_diagonal_entries_are_nonpositive() {
    let (_, h) = setup(TreeSpec::random_bounded(2, 4, 3, 3));
    let m = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap().assemble_matrix().unwrap();
    for i in 0..m.dim() {
        for k in 0..m.dim() {
            if i != k {
                assert!(m.entries[(i, k)] < 0.0);
            }
        }
    }
}

#[test]
fn matrix_cap() {
    let (_, h) = setup(TreeSpec::padic(2, 4));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    assert!(matches!(op.assemble_matrix_capped(8), Err(Error::CapExceeded { .. })));
}

#[test]
fn fast_apply_matches_direct_and_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for spec in families(4) {
        let (_, h) = setup(spec);
        let op = VpOperator::new(&h, OperatorParams::new(2.5)).unwrap();
        let m = op.assemble_matrix().unwrap();
        let f = random_function(&mut rng, h.leaf_count());
        let fast = op.apply(&f).unwrap();
        let direct = op.apply_direct(&f).unwrap();
        let dense = m.mul(&f);
        let scale = direct.values.iter().fold(1.0f64, |a, v| a.max(v.norm()));
        assert!(fast.max_abs_diff(&direct) <= 1e-12 * scale);
        assert!(dense.max_abs_diff(&direct) <= 1e-12 * scale);
    }
}

#[test]
fn constants_are_annihilated() {
    let (_, h) = setup(TreeSpec::level_regular(vec![3, 2], 3));
    let op = VpOperator::new(&h, OperatorParams::new(1.5)).unwrap();
    let df = op.apply(&FunctionVector::constant(h.leaf_count(), 3.0)).unwrap();
    assert!(df.values.iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn wavelets_are_eigenfunctions_for_every_frequency() {
    for spec in families(3) {
        let (_, h) = setup(spec);
        let basis = enumerate_basis(&h);
        let op = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap();
        for k in 1..basis.len() {
            let BasisElement::Wavelet { node, .. } = basis.element(k) else { unreachable!() };
            let psi = basis.element_vector(&h, k);
            let lambda = op.eigenvalue_closed_form(&h.address(node)).unwrap().lambda;
            let d = op.apply(&psi).unwrap();
            for (a, b) in d.values.iter().zip(&psi.values) {
                assert!((a - b * lambda).norm() < 1e-10 * lambda.max(1.0));
            }
        }
    }
}

#[test]
fn binary_level_one_wavelet_eigenvalue() {
    let (_, h) = setup(TreeSpec::padic(2, 2));
    let basis = enumerate_basis(&h);
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let k = basis.index_of(&h, &WaveletIndex::new("0".parse().unwrap(), 1)).unwrap();
    let psi = basis.element_vector(&h, k);
    let d = op.apply(&psi).unwrap();
    assert!(d.max_abs_diff(&FunctionVector::new(psi.values.iter().map(|v| v * 3.0).collect())) < 1e-12);
}

#[test]
fn wavelet_matrix_is_diagonal() {
    let (_, h) = setup(TreeSpec::padic(2, 3));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let basis = enumerate_basis(&h);
    let report = op.wavelet_matrix(&op.assemble_matrix().unwrap(), &basis).unwrap();
    assert!(report.max_off_diagonal < 1e-10);
    assert!(report.rows[0].index.is_none());
    assert!(report.rows[0].diagonal_re.abs() < 1e-12);

    let (_, h) = setup(TreeSpec::level_regular(vec![2, 3], 3));
    let op = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap();
    let basis = enumerate_basis(&h);
    let report = op.wavelet_matrix(&op.assemble_matrix().unwrap(), &basis).unwrap();
    assert!(report.max_diagonal_deviation < 1e-10);
    assert!(report.max_off_diagonal < 1e-10);
}

#[test]
fn explicit_per_level_diameters() {
    let diams = ["1", "1/3", "1/10", "1/50"]
        .iter()
        .map(|d| crate::numeric::parse_rational(d).unwrap())
        .collect();
    let spec = TreeSpec::padic(2, 3).with_metric(Metric::ExplicitDiameters(DiameterSpec::PerLevel(diams)));
    let (_, h) = setup(spec);
    let op = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap();
    let cmp = op.compare_spectrum(&op.assemble_matrix().unwrap());
    assert!(cmp.max_rel_diff < 1e-9);
}

#[test]
fn boundedness_classification() {
    let (_, h) = setup(TreeSpec::padic(2, 6));
    let report = |s: f64| VpOperator::new(&h, OperatorParams::new(s)).unwrap().boundedness_report().unwrap();

    let r4 = report(4.0);
    assert!(r4.kernel_bounded);
    assert_eq!(r4.kernel_trend, Trend::Constant);
    assert_eq!(r4.max_lambda_trend, Trend::Constant);
    assert!((r4.kernel_sup_overall - 2.0).abs() < 1e-12);

    let r2 = report(2.0);
    assert!(!r2.kernel_bounded);
    assert_eq!(r2.max_lambda_trend, Trend::Growing);
    let l = &r2.max_lambda_by_level;
    assert!((l[5] / l[4] - 2.0).abs() < 0.1);

    let r5 = report(5.0);
    assert!(r5.kernel_bounded);
    assert_eq!(r5.max_lambda_trend, Trend::Converging);
    assert!((r5.max_lambda_by_level[5] - 4.0 / 3.0).abs() < 1e-3);

    let (_, shallow) = setup(TreeSpec::padic(2, 3));
    let op = VpOperator::new(&shallow, OperatorParams::new(3.0)).unwrap();
    assert!(op.boundedness_report().is_err());
}

#[test]
fn trend_classifier() {
    assert_eq!(classify_trend(&[2.0, 2.0, 2.0]), Trend::Constant);
    assert_eq!(classify_trend(&[1.0, 2.0, 3.0, 4.0]), Trend::Growing);
    assert_eq!(classify_trend(&[1.0, 1.5, 1.75]), Trend::Converging);
    assert_eq!(classify_trend(&[5.0, 3.0, 1.0]), Trend::Decreasing);
}

#[test]
fn dimension_mismatch_on_apply() {
    let (_, h) = setup(TreeSpec::padic(2, 2));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    assert!(matches!(op.apply(&FunctionVector::zeros(2)), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn self_adjoint_and_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for spec in families(3) {
        let (_, h) = setup(spec);
        let op = VpOperator::new(&h, OperatorParams::new(2.5)).unwrap();
        for _ in 0..100 {
            let f = random_function(&mut rng, h.leaf_count());
            let g = random_function(&mut rng, h.leaf_count());
            let (df, dg) = (op.apply(&f).unwrap(), op.apply(&g).unwrap());
            let lhs = inner(&h, &df, &g).unwrap();
            let rhs = inner(&h, &f, &dg).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
            let q = inner(&h, &df, &f).unwrap();
            assert!(q.re >= -1e-10 && q.im.abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_form_is_nonnegative(seed in any::<u64>(), s in 1.0f64..5.0, tree_seed in 0u64..50) {
        let (_, h) = setup(TreeSpec::random_bounded(2, 4, tree_seed, 3));
        let op = VpOperator::new(&h, OperatorParams::new(s)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_function(&mut rng, h.leaf_count());
        let q = inner(&h, &op.apply(&f).unwrap(), &f).unwrap();
        prop_assert!(q.re >= -1e-10);
    }
}

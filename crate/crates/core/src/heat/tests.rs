use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::operator::OperatorParams;
use crate::tree::{build_tree, Metric, TreeSpec};
use crate::wavelets::{inner, FunctionVector};

fn hierarchy(spec: TreeSpec) -> Hierarchy {
    Hierarchy::new(&build_tree(&spec).unwrap()).unwrap()
}

fn random_real(rng: &mut ChaCha8Rng, n: usize) -> FunctionVector {
    FunctionVector::from_real(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

fn families() -> Vec<TreeSpec> {
    vec![
        TreeSpec::padic(2, 4),
        TreeSpec::padic(3, 3),
        TreeSpec::level_regular(vec![2, 3], 4),
        TreeSpec::random_bounded(2, 4, 21, 3),
        TreeSpec::padic(2, 4).with_metric(Metric::Baire),
    ]
}

#[test]
fn two_state_closed_form() {
    let h = hierarchy(TreeSpec::padic(2, 1));
    let op = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    for t in [0.1f64, 1.0, 3.0] {
        let e = (-2.0 * t).exp();
        let expected = DMatrix::from_row_slice(2, 2, &[(1.0 + e) / 2.0, (1.0 - e) / 2.0, (1.0 - e) / 2.0, (1.0 + e) / 2.0]);
        let p = sd.heat_kernel(t).unwrap().transition;
        assert!((&p - &expected).amax() < 1e-14);
        let oracle = matrix_exponential_oracle(&op, t).unwrap();
        assert!((oracle - expected).amax() < 1e-12);
    }
    assert_eq!(matrix_exponential_oracle(&op, 0.0).unwrap(), DMatrix::identity(2, 2));
}

#[test]
fn invalid_times() {
    let h = hierarchy(TreeSpec::padic(2, 2));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    assert!(sd.heat_kernel(0.0).is_err());
    assert!(sd.heat_kernel(-1.0).is_err());
    assert!(sd.semigroup_apply(&FunctionVector::zeros(4), -0.5).is_err());
    assert!(matrix_exponential_oracle(&op, -1.0).is_err());
}

#[test]
fn semigroup_basics() {
    let h = hierarchy(TreeSpec::level_regular(vec![2, 3], 3));
    let op = VpOperator::new(&h, OperatorParams::new(2.5)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_real(&mut rng, h.leaf_count());
    assert!(sd.semigroup_apply(&f, 0.0).unwrap().max_abs_diff(&f) < 1e-12);
    let c = FunctionVector::constant(h.leaf_count(), 2.5);
    assert!(sd.semigroup_apply(&c, 1.7).unwrap().max_abs_diff(&c) < 1e-12);
    for (t, s) in [(0.1, 0.5), (0.5, 1.0), (1.0, 1.0)] {
        let two_steps = sd.semigroup_apply(&sd.semigroup_apply(&f, t).unwrap(), s).unwrap();
        let one_step = sd.semigroup_apply(&f, t + s).unwrap();
        assert!(two_steps.max_abs_diff(&one_step) < 1e-10);
    }
}

#[test]
fn constant_spectrum_semigroup() {
    let h = hierarchy(TreeSpec::padic(2, 4));
    let op = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_real(&mut rng, h.leaf_count());
    let mean = f.values.iter().sum::<Complex64>() / h.leaf_count() as f64;
    let t = 0.7f64;
    let expected = FunctionVector::new(f.values.iter().map(|v| (v - mean) * (-2.0 * t).exp() + mean).collect());
    assert!(sd.semigroup_apply(&f, t).unwrap().max_abs_diff(&expected) < 1e-12);
}

#[test]
fn heat_kernel_matches_oracle_and_is_stochastic() {
    for spec in families() {
        let h = hierarchy(spec);
        let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
        let sd = SpectralDecomposition::new(&op);
        for t in [0.1, 1.0] {
            let hk = sd.heat_kernel(t).unwrap();
            assert!(hk.max_row_sum_error() < 1e-10);
            assert!(hk.min_entry() >= -1e-12);
            assert!(hk.max_imag < 1e-12);
            let oracle = matrix_exponential_oracle(&op, t).unwrap();
            assert!((&hk.transition - oracle).amax() < 1e-8);
        }
    }
}

#[test]
fn long_time_limit() {
    let h = hierarchy(TreeSpec::padic(2, 3));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let hk = SpectralDecomposition::new(&op).heat_kernel(50.0).unwrap();
    assert!(hk.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn chapman_kolmogorov_and_reversibility() {
    let h = hierarchy(TreeSpec::random_bounded(2, 4, 2, 3));
    let mu = h.leaf_measures();
    let op = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let times = [0.1, 0.5, 1.0];
    for &t in &times {
        let pt = sd.heat_kernel(t).unwrap().transition;
        for i in 0..mu.len() {
            for k in 0..mu.len() {
                assert!((mu[i] * pt[(i, k)] - mu[k] * pt[(k, i)]).abs() < 1e-10);
            }
        }
        // μ is stationary
        for k in 0..mu.len() {
            let s: f64 = (0..mu.len()).map(|i| mu[i] * pt[(i, k)]).sum();
            assert!((s - mu[k]).abs() < 1e-10);
        }
        for &s in &times {
            let ps = sd.heat_kernel(s).unwrap().transition;
            let pts = sd.heat_kernel(t + s).unwrap().transition;
            assert!((&pt * ps - pts).amax() < 1e-9);
        }
    }
}

#[test]
fn green_classes() {
    let h = hierarchy(TreeSpec::padic(2, 5));
    let op = VpOperator::new(&h, OperatorParams::new(1.5)).unwrap();
    let g = SpectralDecomposition::new(&op).green_function().unwrap();
    assert_eq!(g.class, GreenClass::Convergent);
    assert!(g.identity_deviation.unwrap() < 1e-8);
    assert!(g.values.is_some());

    let op = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap();
    let g = SpectralDecomposition::new(&op).green_function().unwrap();
    assert_eq!(g.class, GreenClass::Divergent);
    assert!(g.values.is_none());
    assert!((g.ratio.unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(g.level_sums.len(), 5);

    let shallow = hierarchy(TreeSpec::padic(2, 1));
    let op = VpOperator::new(&shallow, OperatorParams::new(1.5)).unwrap();
    assert_eq!(SpectralDecomposition::new(&op).green_function().unwrap().class, GreenClass::Indeterminate);
}

#[test]
fn green_ratio_test_boundaries() {
    assert_eq!(classify_green(&[1.0, 0.995]).0, GreenClass::Indeterminate);
    assert_eq!(classify_green(&[1.0, 0.98]).0, GreenClass::Convergent);
    assert_eq!(classify_green(&[1.0, 1.02]).0, GreenClass::Divergent);
}

#[test]
fn green_identity_across_families() {
    for spec in families() {
        let h = hierarchy(spec);
        let op = VpOperator::new(&h, OperatorParams::new(1.2)).unwrap();
        let g = SpectralDecomposition::new(&op).green_function().unwrap();
        if g.class == GreenClass::Convergent {
            assert!(g.identity_deviation.unwrap() < 1e-8);
        }
    }
}

#[test]
fn markov_properties() {
    let h = hierarchy(TreeSpec::padic(2, 4));
    let op = VpOperator::new(&h, OperatorParams::new(3.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let report = sd.markov_checks(&[0.05, 0.5, 2.0], 100, 7).unwrap();
    assert!(report.all_pass, "{report:?}");
    assert_eq!(report.rows[0].trials, 101);

    let leaf = FunctionVector::indicator(&h, h.leaf_node(3));
    let out = sd.semigroup_apply(&leaf, 0.5).unwrap();
    assert!(out.values.iter().all(|v| v.re >= -1e-10 && v.re <= 1.0 + 1e-10));
}

#[test]
fn sobolev_norms() {
    let h = hierarchy(TreeSpec::padic(2, 4));
    let op = VpOperator::new(&h, OperatorParams::new(4.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let one = sd.sobolev_norm(&FunctionVector::constant(h.leaf_count(), 1.0)).unwrap();
    assert!((one.total - 1.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut f = random_real(&mut rng, h.leaf_count());
    let mean = f.values.iter().sum::<Complex64>() / h.leaf_count() as f64;
    f.values.iter_mut().for_each(|v| *v -= mean);
    let scale = inner(&h, &f, &f).unwrap().re.sqrt();
    f.values.iter_mut().for_each(|v| *v /= scale);
    let n = sd.sobolev_norm(&f).unwrap();
    assert!((n.total - 5f64.sqrt()).abs() < 1e-12);
    assert!((n.total - n.spectral_total).abs() < 1e-10);

    let h = hierarchy(TreeSpec::level_regular(vec![3, 2], 3));
    let op = VpOperator::new(&h, OperatorParams::new(2.0)).unwrap();
    let sd = SpectralDecomposition::new(&op);
    let k = 3;
    let psi = sd.basis().element_vector(&h, k);
    let lambda = sd.eigenvalues()[k];
    let n = sd.sobolev_norm(&psi).unwrap();
    assert!((n.total - (1.0 + lambda * lambda).sqrt()).abs() < 1e-10 * n.total);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sobolev_direct_equals_spectral(seed in any::<u64>(), s in 1.0f64..5.0) {
        let h = hierarchy(TreeSpec::random_bounded(2, 3, seed % 16, 3));
        let op = VpOperator::new(&h, OperatorParams::new(s)).unwrap();
        let sd = SpectralDecomposition::new(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_real(&mut rng, h.leaf_count());
        let n = sd.sobolev_norm(&f).unwrap();
        prop_assert!((n.total - n.spectral_total).abs() <= 1e-10 * n.total.max(1.0));
        prop_assert!(n.total >= n.l2_part);
        prop_assert!((n.total.powi(2) - n.l2_part.powi(2) - n.grad_part.powi(2)).abs() <= 1e-12 * n.total.powi(2).max(1.0));
    }

    #[test]
    fn semigroup_is_positive(seed in any::<u64>(), t in 0.01f64..3.0) {
        let h = hierarchy(TreeSpec::padic(3, 3));
        let op = VpOperator::new(&h, OperatorParams::new(2.5)).unwrap();
        let sd = SpectralDecomposition::new(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FunctionVector::from_real(&(0..h.leaf_count()).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
        let out = sd.semigroup_apply(&f, t).unwrap();
        prop_assert!(out.values.iter().all(|v| v.re >= -1e-10 && v.re <= 1.0 + 1e-10));
    }
}

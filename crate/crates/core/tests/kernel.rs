use intervalad::kernel::KernelFunction;
use intervalad::{build_kernel, required_order, verify_moments, KernelFamily};
use proptest::prelude::*;

#[test]
fn order_rule() {
    assert_eq!([1, 2, 3, 4].map(required_order), [2, 3, 3, 4]);
}

#[test]
fn higher_order_kernels_pass_moment_checks() {
    for ell in 1..=4 {
        let k = build_kernel(KernelFamily::HigherOrderGaussian, ell, required_order(ell)).unwrap();
        let r = verify_moments(&k, 1e-6);
        assert!(r.passed, "ell={ell}: {:?}", r.failures);
        assert!((r.integral - 1.0).abs() < 1e-10);
    }
}

#[test]
fn perturbed_kernel_fails() {
    let k = KernelFunction::with_coefficients(KernelFamily::HigherOrderGaussian, 2, 3, vec![1.5, -0.45]);
    assert!(!verify_moments(&k, 1e-6).passed);
}

#[test]
fn univariate_third_order_by_hand() {
    // (3/2 - t^2/2) phi(t): second moment 3/2 - 3/2 = 0, fourth 9/2 - 15/2 = -3
    let k = build_kernel(KernelFamily::HigherOrderGaussian, 2, 3).unwrap();
    let r = verify_moments(&k, 1e-6);
    let m = |a: Vec<usize>| r.moments.iter().find(|(i, _)| *i == a).unwrap().1;
    assert!(m(vec![2, 0]).abs() < 1e-12);
    assert!(m(vec![1, 1]).abs() < 1e-12);
    assert!((m(vec![4, 0]) + 3.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(ell in 1usize..=3, u in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let k = build_kernel(KernelFamily::HigherOrderGaussian, ell, required_order(ell)).unwrap();
        let u = &u[..ell];
        let g = k.eval_gradient(u).unwrap();
        let step = 1e-5;
        let mut x = u.to_vec();
        let mut err = 0.0f64;
        for d in 0..ell {
            x[d] = u[d] + step;
            let up = k.eval(&x).unwrap();
            x[d] = u[d] - step;
            let dn = k.eval(&x).unwrap();
            x[d] = u[d];
            err = err.max(((up - dn) / (2.0 * step) - g[d]).abs());
        }
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3 * k.eval(u).unwrap().abs());
        prop_assert!(err <= 1e-6 * scale.max(1e-12));
    }

    #[test]
    fn kernel_is_even_and_gradient_odd(u in proptest::collection::vec(-4.0f64..4.0, 2)) {
        let k = build_kernel(KernelFamily::Gaussian, 2, 2).unwrap();
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        prop_assert_eq!(k.eval(&u).unwrap(), k.eval(&neg).unwrap());
        let a = k.eval_gradient(&u).unwrap();
        let b = k.eval_gradient(&neg).unwrap();
        prop_assert_eq!(a[0], -b[0]);
        prop_assert_eq!(a[1], -b[1]);
    }
}

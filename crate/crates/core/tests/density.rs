use intervalad::density::{build_score_table, loo_density, loo_score};
use intervalad::{build_kernel, validate_sample, IntervalSample, KernelFamily, RawRow};
use proptest::prelude::*;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Product Gaussian kernel and its gradient, written out directly.
fn gaussian(u: &[f64]) -> (f64, Vec<f64>) {
    let k: f64 = u.iter().map(|t| INV_SQRT_2PI * (-0.5 * t * t).exp()).product();
    (k, u.iter().map(|t| -t * k).collect())
}

/// `(3/2 - t^2/2) phi(t)` per coordinate.
fn third_order(u: &[f64]) -> (f64, Vec<f64>) {
    let f = |t: f64| (1.5 - 0.5 * t * t) * INV_SQRT_2PI * (-0.5 * t * t).exp();
    let df = |t: f64| (-t - t * (1.5 - 0.5 * t * t)) * INV_SQRT_2PI * (-0.5 * t * t).exp();
    let vals: Vec<f64> = u.iter().map(|&t| f(t)).collect();
    let k: f64 = vals.iter().product();
    let g = (0..u.len())
        .map(|j| {
            (0..u.len())
                .map(|i| if i == j { df(u[i]) } else { vals[i] })
                .product()
        })
        .collect();
    (k, g)
}

fn naive(sample: &IntervalSample, h: f64, kern: fn(&[f64]) -> (f64, Vec<f64>)) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, ell) = (sample.n(), sample.ell());
    let mut f = vec![0.0; n];
    let mut l = vec![vec![0.0; ell]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let u: Vec<f64> = (0..ell).map(|d| (sample.z(i)[d] - sample.z(j)[d]) / h).collect();
            let (k, g) = kern(&u);
            f[i] += k;
            for d in 0..ell {
                l[i][d] += g[d];
            }
        }
        f[i] /= (n - 1) as f64 * h.powi(ell as i32);
        for d in 0..ell {
            l[i][d] *= -2.0 / ((n - 1) as f64 * h.powi(ell as i32 + 1));
        }
    }
    (f, l)
}

fn random_sample(n: usize, ell: usize, seed: u64) -> IntervalSample {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
    };
    let rows: Vec<RawRow> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..ell).map(|_| next()).collect();
            let y = next();
            RawRow::new(y, y + 1.0, z)
        })
        .collect();
    validate_sample(&rows).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn table_matches_naive_double_loop() {
    for (ell, family, kern) in [
        (1, KernelFamily::Gaussian, gaussian as fn(&[f64]) -> (f64, Vec<f64>)),
        (2, KernelFamily::Gaussian, gaussian),
        (2, KernelFamily::HigherOrderGaussian, third_order),
    ] {
        let sample = random_sample(300, ell, 5 + ell as u64);
        let order = if family == KernelFamily::Gaussian { 2 } else { 3 };
        let k = build_kernel(family, ell, order).unwrap();
        let table = build_score_table(&sample, &k, 0.45).unwrap();
        let (f, l) = naive(&sample, 0.45, kern);
        for i in 0..sample.n() {
            assert!(close(table.fhat(i), f[i], 1e-12));
            for d in 0..ell {
                assert!(close(table.lhat(i)[d], l[i][d], 1e-12), "{} vs {}", table.lhat(i)[d], l[i][d]);
            }
        }
    }
}

#[test]
fn table_independent_of_thread_count() {
    let sample = random_sample(700, 2, 17);
    let k = build_kernel(KernelFamily::Gaussian, 2, 2).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap();
    let a = one.install(|| build_score_table(&sample, &k, 0.3).unwrap());
    let b = many.install(|| build_score_table(&sample, &k, 0.3).unwrap());
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pointwise_and_table_agree_bitwise(n in 2usize..200, seed in 0u64..1000, h in 0.1f64..2.0) {
        let sample = random_sample(n, 2, seed);
        let k = build_kernel(KernelFamily::HigherOrderGaussian, 2, 3).unwrap();
        let table = build_score_table(&sample, &k, h).unwrap();
        for i in [0, n / 2, n - 1] {
            let z = sample.z(i).to_vec();
            prop_assert_eq!(loo_density(&sample, &k, h, i, &z).unwrap().to_bits(), table.fhat(i).to_bits());
            let s = loo_score(&sample, &k, h, i, &z).unwrap();
            prop_assert_eq!(s.as_slice(), table.lhat(i));
        }
    }

    #[test]
    fn score_is_odd_under_reflection(n in 3usize..60, seed in 0u64..1000) {
        // reflecting every covariate flips every score and keeps every density
        let sample = random_sample(n, 2, seed);
        let rows: Vec<RawRow> = sample
            .rows()
            .into_iter()
            .map(|r| RawRow::new(r.y_lower, r.y_upper, r.z.iter().map(|v| -v).collect()))
            .collect();
        let mirrored = validate_sample(&rows).unwrap();
        let k = build_kernel(KernelFamily::Gaussian, 2, 2).unwrap();
        let a = build_score_table(&sample, &k, 0.7).unwrap();
        let b = build_score_table(&mirrored, &k, 0.7).unwrap();
        for i in 0..n {
            prop_assert_eq!(a.fhat(i), b.fhat(i));
            prop_assert_eq!(a.lhat(i)[0], -b.lhat(i)[0]);
            prop_assert_eq!(a.lhat(i)[1], -b.lhat(i)[1]);
        }
    }
}

use intervalad::inference::{
    bootstrap_process, coordinate_confidence_interval, directed_hausdorff, draw_multipliers, hausdorff,
    one_sided_confidence_set, BootstrapConfig, BootstrapTerms, Centering, MultiplierLaw,
};
use intervalad::numeric::McEstimate;
use intervalad::simulation::{generate, DgpConfig};
use intervalad::{
    make_direction_grid, validate_sample, ConvexSetRepr, DirectionGrid, EstimatorConfig, IntervalSample, KernelFamily, KernelSpec,
    RawRow, SupportEstimator,
};
use proptest::prelude::*;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn config(grid: DirectionGrid, h: f64) -> EstimatorConfig {
    EstimatorConfig {
        kernel: KernelSpec::new(KernelFamily::Gaussian, grid.ell(), h, h).unwrap(),
        grid,
        renormalize: false,
    }
}

fn sample(n: usize, seed: u64) -> IntervalSample {
    generate(&DgpConfig::new(n, 0.5, seed)).unwrap()
}

/// Per-observation bootstrap terms by direct double summation.
fn naive_terms(s: &IntervalSample, h: f64, p: &[f64]) -> (Vec<f64>, f64) {
    let n = s.n();
    let grad = |i: usize, j: usize| -> Vec<f64> {
        let u: Vec<f64> = (0..2).map(|d| (s.z(i)[d] - s.z(j)[d]) / h).collect();
        let k: f64 = u.iter().map(|t| INV_SQRT_2PI * (-0.5 * t * t).exp()).product();
        u.iter().map(|t| -t * k).collect()
    };
    let c = -2.0 / ((n - 1) as f64 * h.powi(3));
    let l: Vec<f64> = (0..n)
        .map(|i| {
            let g: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| grad(i, j)).fold(vec![0.0; 2], |a, g| {
                vec![a[0] + g[0], a[1] + g[1]]
            });
            c * (p[0] * g[0] + p[1] * g[1])
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|i| if l[i] <= 0.0 { s.y_lower(i) } else { s.y_upper(i) }).collect();
    let upsilon = (0..n).map(|i| l[i] * y[i]).sum::<f64>() / n as f64;
    let a = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let g = grad(i, j);
                    c * (p[0] * g[0] + p[1] * g[1]) * (y[i] - y[j])
                })
                .sum()
        })
        .collect();
    (a, upsilon)
}

#[test]
fn process_with_unit_and_zero_weights() {
    let s = sample(20, 4);
    let cfg = config(make_direction_grid(2, 12).unwrap(), 0.7);
    let est = SupportEstimator::fit(&s, &cfg).unwrap();
    for k in 0..cfg.grid.len() {
        let p = cfg.grid.direction(k);
        assert_eq!(bootstrap_process(&est, &vec![0.0; 20], k, Centering::AsDisplayed).unwrap(), 0.0);
        let (a, ups) = naive_terms(&s, 0.7, p);
        let expected = a.iter().map(|ai| ai - ups).sum::<f64>() / 20f64.sqrt();
        let got = bootstrap_process(&est, &vec![1.0; 20], k, Centering::AsDisplayed).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        // the pairwise terms sum to twice the estimate
        assert!((a.iter().sum::<f64>() - 40.0 * ups).abs() < 1e-12);
        let centred = bootstrap_process(&est, &vec![1.0; 20], k, Centering::Projection).unwrap();
        assert!(centred.abs() < 1e-12);
    }
}

#[test]
fn process_has_mean_zero_over_multipliers() {
    let s = sample(150, 2);
    let cfg = config(make_direction_grid(2, 8).unwrap(), 0.6);
    let est = SupportEstimator::fit(&s, &cfg).unwrap();
    let terms = BootstrapTerms::compute(&est).unwrap();
    for law in [MultiplierLaw::StdNormal, MultiplierLaw::Rademacher] {
        let vals: Vec<f64> = (0..4000)
            .map(|b| terms.process(3, &draw_multipliers(law, 150, 99, b), Centering::AsDisplayed))
            .collect();
        let m = McEstimate::from_values(&vals);
        assert!(m.mean.abs() < 3.0 * m.se, "{m:?}");
    }
}

#[test]
fn confidence_set_properties() {
    let s = sample(200, 6);
    let cfg = config(make_direction_grid(2, 32).unwrap(), 0.6);
    let est = SupportEstimator::fit(&s, &cfg).unwrap();
    let set = est.estimate_set().unwrap();
    let b = BootstrapConfig::new(150, 0.05, 12).unwrap();
    let out = one_sided_confidence_set(&est, &set, &b).unwrap();
    assert!(out.expansion_radius >= 0.0);
    assert_eq!(out.expansion_radius, out.critical_value / 200f64.sqrt());
    assert_eq!(directed_hausdorff(&set.hull.support, &out.expanded_set.support).unwrap(), 0.0);
    for (j, &(lo, hi)) in out.coordinate_intervals.iter().enumerate() {
        let (blo, bhi) = set.coordinate_bounds[j];
        assert!(lo <= blo && bhi <= hi);
    }
    assert_eq!(coordinate_confidence_interval(&est, &set, &b, 1).unwrap(), out.coordinate_intervals[1]);

    // alpha = 1 selects the smallest sup statistic
    let terms = BootstrapTerms::compute(&est).unwrap();
    let sups: Vec<f64> = (0..150)
        .map(|d| {
            let w = draw_multipliers(MultiplierLaw::StdNormal, 200, 12, d);
            (0..cfg.grid.len())
                .map(|k| (-terms.process(k, &w, Centering::AsDisplayed)).max(0.0))
                .fold(0.0, f64::max)
        })
        .collect();
    let one = BootstrapConfig::new(150, 1.0, 12).unwrap();
    let out1 = one_sided_confidence_set(&est, &set, &one).unwrap();
    assert_eq!(out1.critical_value, sups.iter().copied().fold(f64::INFINITY, f64::min));
    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(out.critical_value, sorted[142]);
}

#[test]
fn coordinate_radius_uses_axis_directions_only() {
    let s = sample(120, 13);
    let b = BootstrapConfig::new(120, 0.1, 5).unwrap();
    let run = |m: usize| {
        let cfg = config(make_direction_grid(2, m).unwrap(), 0.6);
        let est = SupportEstimator::fit(&s, &cfg).unwrap();
        let set = est.estimate_set().unwrap();
        one_sided_confidence_set(&est, &set, &b).unwrap()
    };
    let (fine, axes) = (run(48), run(4));
    assert_eq!(fine.coordinate_critical_values, axes.coordinate_critical_values);

    // with ell = 1 the grid is exactly {+iota, -iota}
    let rows: Vec<RawRow> = s.rows().into_iter().map(|r| RawRow::new(r.y_lower, r.y_upper, vec![r.z[0]])).collect();
    let line = validate_sample(&rows).unwrap();
    let cfg = config(make_direction_grid(1, 2).unwrap(), 0.6);
    let est = SupportEstimator::fit(&line, &cfg).unwrap();
    let set = est.estimate_set().unwrap();
    let out = one_sided_confidence_set(&est, &set, &b).unwrap();
    assert_eq!(out.critical_value, out.coordinate_critical_values[0]);
    assert_eq!(out.expanded_set.support.coordinate_bounds(0).unwrap(), out.coordinate_intervals[0]);
}

#[test]
fn radii_do_not_depend_on_thread_count() {
    let s = sample(150, 31);
    let cfg = config(make_direction_grid(2, 16).unwrap(), 0.6);
    let b = BootstrapConfig::new(200, 0.05, 8).unwrap();
    let go = || {
        let est = SupportEstimator::fit(&s, &cfg).unwrap();
        let set = est.estimate_set().unwrap();
        one_sided_confidence_set(&est, &set, &b).unwrap().critical_value
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(5).build().unwrap();
    assert_eq!(one.install(go).to_bits(), many.install(go).to_bits());
}

#[test]
fn renormalized_estimator_is_refused() {
    let s = sample(50, 1);
    let mut cfg = config(make_direction_grid(2, 8).unwrap(), 0.6);
    cfg.renormalize = true;
    let est = SupportEstimator::fit(&s, &cfg).unwrap();
    assert!(BootstrapTerms::compute(&est).is_err());
}

#[test]
fn translated_squares() {
    let m = 64;
    let grid = make_direction_grid(2, m).unwrap();
    let square = |t: [f64; 2]| {
        let pts: Vec<Vec<f64>> = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .iter()
            .map(|v| vec![v[0] + t[0], v[1] + t[1]])
            .collect();
        ConvexSetRepr::hull_of(&grid, &pts).unwrap().support
    };
    let t = [0.3, -0.4];
    let d = hausdorff(&square([0.0, 0.0]), &square(t)).unwrap();
    let diam = 2f64.sqrt();
    assert!(d <= 0.5 + 1e-12);
    assert!(0.5 - d <= diam * (1.0 - (std::f64::consts::PI / m as f64).cos()));
}

fn hull(points: &[(f64, f64)]) -> ConvexSetRepr {
    let grid = make_direction_grid(2, 24).unwrap();
    let pts: Vec<Vec<f64>> = points.iter().map(|&(a, b)| vec![a, b]).collect();
    ConvexSetRepr::hull_of(&grid, &pts).unwrap()
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hausdorff_is_a_metric(a in points(), b in points(), c in points()) {
        let (a, b, c) = (hull(&a).support, hull(&b).support, hull(&c).support);
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= hausdorff(&a, &c).unwrap() + hausdorff(&c, &b).unwrap() + 1e-12);
        prop_assert_eq!(ab, directed_hausdorff(&a, &b).unwrap().max(directed_hausdorff(&b, &a).unwrap()));
    }

    #[test]
    fn directed_distance_vanishes_on_containment(a in points(), extra in points()) {
        let mut bigger = a.clone();
        bigger.extend(extra);
        let (small, big) = (hull(&a).support, hull(&bigger).support);
        prop_assert_eq!(directed_hausdorff(&small, &big).unwrap(), 0.0);
    }
}

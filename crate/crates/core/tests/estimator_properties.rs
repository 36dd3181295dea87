use deconv_cdf::estimators::*;
use deconv_cdf::kernels::gauss_cdf;
use deconv_cdf::schedules::*;
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unit_gain_with_constant_bandwidth_is_the_batch_estimator(
        data in vec(-5.0..5.0f64, 1..200),
        h in 0.05..2.0f64,
        sigma in 0.0..1.0f64,
    ) {
        let grid = EvaluationGrid::uniform(-8.0, 8.0, 41).unwrap();
        let mut state = recursive_init(
            grid.clone(),
            sigma,
            StepsizeSchedule::new(1.0).unwrap(),
            BandwidthSchedule::constant(h).unwrap(),
        ).unwrap();
        state.update_all(&data).unwrap();
        let batch = nadaraya_estimate(&data, h, sigma, &grid).unwrap();
        for (a, b) in state.values().iter().zip(&batch) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn pointwise_and_grid_recursions_agree(
        data in vec(-3.0..3.0f64, 1..60),
        gamma0 in 0.3..2.0f64,
        c in 0.1..2.0f64,
    ) {
        let grid = EvaluationGrid::uniform(-4.0, 4.0, 9).unwrap();
        let s = StepsizeSchedule::new(gamma0).unwrap();
        let b = BandwidthSchedule::new(c, 1.0 / 7.0).unwrap();
        let mut state = recursive_init(grid.clone(), 0.3, s, b).unwrap();
        state.update_all(&data).unwrap();
        for (x, v) in grid.points().iter().zip(state.values()) {
            let direct = recursive_estimate_at(&data, *x, 0.3, &s, &b);
            prop_assert!((direct - v).abs() <= 1e-12);
            prop_assert!((state.evaluate(*x).unwrap() - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn pilot_scale_is_translation_invariant_and_scale_equivariant(
        data in vec(-10.0..10.0f64, 3..50),
        shift in -100.0..100.0f64,
        factor in 0.1..10.0f64,
    ) {
        prop_assume!(data.iter().any(|v| *v != data[0]));
        let base = pilot_scale(&data).unwrap();
        let shifted: Vec<f64> = data.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = data.iter().map(|v| v * factor).collect();
        prop_assert!((pilot_scale(&shifted).unwrap() - base).abs() <= 1e-9 * base.max(1.0) * (1.0 + shift.abs()));
        prop_assert!((pilot_scale(&scaled).unwrap() - factor * base).abs() <= 1e-9 * factor * base);
    }

    #[test]
    fn averaging_weights_telescope(gamma0 in 0.1..3.0f64, n in 1usize..300) {
        let w = averaging_weights(&StepsizeSchedule::new(gamma0).unwrap(), n);
        let prod: f64 = (1..=n).map(|j| 1.0 - gamma0 / j as f64).product();
        let total: f64 = w.iter().sum();
        prop_assert!((total + prod - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_and_monotonize_gives_a_distribution_function(values in vec(-1.0..2.0f64, 1..50)) {
        let out = clip_and_monotonize(&values);
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn weighted_sum_limit() {
    // v_n Pi_n sum_k Pi_k^-1 gamma_k / v_k with gamma_k = 1/k, v_k = k^-2/7,
    // accumulated as T_k = (1 - gamma_k) T_{k-1} + gamma_k / v_k.
    let n = 10_000;
    let v = |k: usize| (k as f64).powf(-2.0 / 7.0);
    let mut t = 0.0;
    for k in 1..=n {
        let g = 1.0 / k as f64;
        t = (1.0 - g) * t + g / v(k);
    }
    let value = v(n) * t;
    assert!((value / (7.0 / 9.0) - 1.0).abs() < 0.02, "{value}");
}

#[test]
fn error_free_recursive_estimator_is_consistent() {
    use deconv_cdf::simlab::{replication_rng, sample_contaminated, TrueDistribution};
    let d = TrueDistribution::Normal { mean: 0.0, variance: 1.0 };
    let grid = EvaluationGrid::uniform(-3.0, 3.0, 61).unwrap();
    let sup = |n: usize| {
        let (_, y) = sample_contaminated(&d, n, 0.0, &mut replication_rng(4, n as u64));
        let mut state = recursive_init(
            grid.clone(),
            0.0,
            StepsizeSchedule::new(1.0).unwrap(),
            BandwidthSchedule::new(1.0, 1.0 / 7.0).unwrap(),
        )
        .unwrap();
        state.update_all(&y).unwrap();
        grid.points()
            .iter()
            .zip(state.values())
            .map(|(x, v)| (v - gauss_cdf(*x)).abs())
            .fold(0.0, f64::max)
    };
    let small = sup(100);
    let large = sup(20_000);
    assert!(large < 0.05, "{large}");
    assert!(large < small);
}

use deconv_cdf::simlab::*;

fn small(nsr: f64, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(TrueDistribution::Normal { mean: 0.0, variance: 0.5 }, 25, nsr, 60, seed);
    cfg.estimators = vec![EstimatorVariant::Nadaraya, EstimatorVariant::Recursive { gamma0: 1.0 }];
    cfg
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let cfg = small(0.1, 5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_scenario(&cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    for (a, b) in one.estimators.iter().zip(&four.estimators) {
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.mean_rmre.to_bits(), b.mean_rmre.to_bits());
        assert_eq!(a.mean_cor.to_bits(), b.mean_cor.to_bits());
        assert_eq!(a.excluded_reps, b.excluded_reps);
    }
}

#[test]
fn metrics_are_in_range() {
    for d in TrueDistribution::table_set() {
        let mut cfg = small(0.1, 9);
        cfg.distribution = d;
        cfg.reps = 20;
        let report = run_scenario(&cfg).unwrap();
        for e in &report.estimators {
            assert!(e.excluded_reps < cfg.reps, "{d} {}", e.estimator);
            assert!(e.mean_rmre >= 0.0 && e.mean_rmre < 1.0);
            assert!(e.mean_cor <= 1.0 && e.mean_cor > 0.9, "{d} {} cor {}", e.estimator, e.mean_cor);
        }
    }
}

#[test]
fn grid_refinement_barely_moves_rmre() {
    let mut cfg = small(0.1, 12);
    cfg.n = 50;
    cfg.reps = 100;
    let coarse = run_scenario(&cfg).unwrap();
    cfg.grid_points = 201;
    let fine = run_scenario(&cfg).unwrap();
    for (a, b) in coarse.estimators.iter().zip(&fine.estimators) {
        assert!((a.mean_rmre / b.mean_rmre - 1.0).abs() < 0.05, "{} {} {}", a.estimator, a.mean_rmre, b.mean_rmre);
        assert!(a.mean_cor * b.mean_cor > 0.0);
    }
}

#[test]
fn excluded_replications_are_counted() {
    // Tiny noisy samples regularly produce nonpositive I2 estimates.
    let mut cfg = small(0.5, 3);
    cfg.n = 5;
    cfg.reps = 200;
    let report = run_scenario(&cfg).unwrap();
    for e in &report.estimators {
        let missing = e.scores.iter().filter(|s| s.is_none()).count();
        assert_eq!(missing, e.excluded_reps);
    }
    assert!(report.estimators.iter().any(|e| e.excluded_reps > 0));
}

#[test]
fn error_free_scenarios_use_the_step_limits() {
    let cfg = small(0.0, 2);
    let report = run_scenario(&cfg).unwrap();
    assert_eq!(report.sigma, 0.0);
    let nad = report.get(EstimatorVariant::Nadaraya).unwrap();
    let rec = report.get(EstimatorVariant::Recursive { gamma0: 1.0 }).unwrap();
    assert_eq!(nad.excluded_reps, 0);
    // With unit gain the step-function recursion is the empirical cdf.
    for (a, b) in nad.scores.iter().zip(&rec.scores) {
        let (a, b) = (a.unwrap(), b.unwrap());
        assert!((a.rmre - b.rmre).abs() < 1e-12);
    }
}

/// Paired check of noise monotonicity. With the error-free case resolved to
/// the zero-bandwidth limits, the unsmoothed empirical cdf loses to the
/// smoothed deconvolution estimator at NSR = 20% in most replications, so
/// this does not hold; see the README.
#[test]
#[ignore = "known failure: RMRE(NSR=0) <= RMRE(NSR=20%) holds in about 40% of replications, not 80%"]
fn noise_increases_rmre_in_most_replications() {
    let mut clean = small(0.0, 7);
    clean.reps = 500;
    let mut noisy = clean.clone();
    noisy.nsr = 0.2;
    let a = run_scenario(&clean).unwrap();
    let b = run_scenario(&noisy).unwrap();
    for (ea, eb) in a.estimators.iter().zip(&b.estimators) {
        let pairs: Vec<(f64, f64)> = ea
            .scores
            .iter()
            .zip(&eb.scores)
            .filter_map(|(x, y)| Some((x.as_ref()?.rmre, y.as_ref()?.rmre)))
            .collect();
        let wins = pairs.iter().filter(|(x, y)| x <= y).count();
        let frac = wins as f64 / pairs.len() as f64;
        println!("{}: RMRE(0) <= RMRE(0.2) in {frac:.3} of replications", ea.estimator);
        assert!(frac >= 0.8);
    }
}

#[test]
fn symmetric_point_has_no_predicted_bias() {
    let cfg = ProbeConfig {
        distribution: TrueDistribution::Normal { mean: 0.0, variance: 1.0 },
        x: 0.0,
        n: 500,
        gamma0: 1.0,
        sigma: 0.5,
        bandwidth_c: 0.7,
        reps: 400,
        seed: 21,
    };
    let p = bias_variance_probe(&cfg).unwrap();
    assert_eq!(p.predicted_bias, 0.0);
    assert!(p.mc_bias.abs() <= 3.0 * p.mc_bias_se, "{p:?}");
}

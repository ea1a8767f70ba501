use qcd_core::distributions::{DistributionSpec, PostChangeGenerator};
use qcd_core::simulation::{
    delay_curve, estimate_mtfa, estimate_wadd, operating_curve, write_curve_csv, CurveSpec,
    DetectorSpec,
};
use qcd_core::thresholds::{mct_threshold_exact, mct_threshold_small_delta};

fn beta(a: f64, b: f64) -> DistributionSpec {
    DistributionSpec::beta(a, b).unwrap()
}

fn fig1_mct(thresholds: Vec<f64>, seed: u64) -> CurveSpec {
    CurveSpec::new(
        DetectorSpec::Mct {
            mu0: 0.2,
            eta: 0.21,
        },
        beta(4.0, 16.0),
        PostChangeGenerator::stationary(beta(4.5, 16.0)),
        thresholds,
        seed,
    )
}

fn csv_with_threads(spec: &CurveSpec, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let curve = pool.install(|| operating_curve(spec)).unwrap();
    let mut out = Vec::new();
    write_curve_csv(&curve, &mut out).unwrap();
    out
}

#[test]
fn csv_identical_across_worker_counts() {
    for detector in [
        DetectorSpec::Mct {
            mu0: 0.2,
            eta: 0.21,
        },
        DetectorSpec::TiltedCusum {
            base: beta(4.0, 16.0),
            eta: 0.21,
        },
        DetectorSpec::Cusum {
            pre: beta(4.0, 16.0),
            post: beta(4.5, 16.0),
        },
    ] {
        let mut spec = fig1_mct(vec![0.5, 1.0, 1.5], 21);
        spec.detector = detector;
        spec.trials = 300;
        spec.mtfa_trials = 150;
        let one = csv_with_threads(&spec, 1);
        assert_eq!(one, csv_with_threads(&spec, 3));
        assert_eq!(one, csv_with_threads(&spec, 8));
    }
}

#[test]
fn different_seeds_differ() {
    let mut a = fig1_mct(vec![1.0], 1);
    a.trials = 200;
    let mut b = a.clone();
    b.seed = 2;
    assert_ne!(
        estimate_wadd(&a, 1.0).unwrap().mean,
        estimate_wadd(&b, 1.0).unwrap().mean
    );
}

#[test]
fn change_at_one_dominates_later_change() {
    let thresholds = vec![1.0, 2.0, 3.0];
    let mut first = fig1_mct(thresholds.clone(), 31);
    first.trials = 4000;
    let mut later = first.clone();
    later.warmup = 200;
    let a = delay_curve(&first).unwrap();
    let b = delay_curve(&later).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(y.early_alarms > 0 || x.threshold >= 3.0);
        let slack = x.ci_halfwidth.hypot(y.ci_halfwidth);
        assert!(
            y.mean <= x.mean + slack,
            "b={}: nu=201 {} vs nu=1 {}",
            x.threshold,
            y.mean,
            x.mean
        );
    }
}

#[test]
fn no_censoring_at_a_hundred_renewal_times() {
    let delta = 0.005;
    let b = mct_threshold_small_delta(0.01, 0.2, 0.0076190, 0.21).unwrap();
    for post in [
        PostChangeGenerator::stationary(beta(4.5, 16.0)),
        PostChangeGenerator::stationary(beta(4.2, 15.8)),
    ] {
        let mut spec = fig1_mct(vec![b], 41);
        spec.post = post;
        spec.delay_cap = (100.0 * b / delta).ceil() as u64;
        let d = estimate_wadd(&spec, b).unwrap();
        assert_eq!(d.trials, 10_000);
        assert_eq!(d.censored, 0);
    }
}

// Post mean exactly eta: the drift of the reflected walk is delta, so the
// delay stays below (b + max overshoot) / delta and is a sizable fraction of
// b / delta.
#[test]
fn mct_delay_against_renewal_scale() {
    let b = mct_threshold_small_delta(0.01, 0.2, 0.0076190, 0.21).unwrap();
    let mut spec = fig1_mct(vec![b], 51);
    spec.post = PostChangeGenerator::stationary(beta(4.2, 15.8));
    let d = estimate_wadd(&spec, b).unwrap();
    let renewal = b / 0.005;
    assert!(d.mean <= (b + 0.795) / 0.005);
    assert!(d.mean >= 0.75 * renewal, "{} vs {renewal}", d.mean);
}

#[test]
fn threshold_zero_gives_unit_times() {
    let spec = fig1_mct(vec![0.0], 3);
    assert_eq!(estimate_wadd(&spec, 0.0).unwrap().mean, 1.0);
    assert_eq!(estimate_mtfa(&spec, 0.0).unwrap().mean, 1.0);
}

#[test]
fn tilted_cusum_false_alarms_rarer_than_exp_b() {
    let mut spec = fig1_mct(vec![4.0], 61);
    spec.detector = DetectorSpec::TiltedCusum {
        base: beta(4.0, 16.0),
        eta: 0.21,
    };
    spec.mtfa_trials = 500;
    spec.mtfa_cap = Some(10_000_000);
    let m = estimate_mtfa(&spec, 4.0).unwrap();
    assert!(!m.lower_bound);
    assert!(m.mean - m.ci_halfwidth >= 4f64.exp());
}

#[test]
fn mct_at_corrected_threshold_meets_false_alarm_target() {
    let alpha = 0.05;
    let design = mct_threshold_exact(alpha, 0.5, 0.05, 0.6).unwrap();
    let b = design.b_tilde_prime;
    let mut spec = CurveSpec::new(
        DetectorSpec::Mct { mu0: 0.5, eta: 0.6 },
        beta(2.0, 2.0),
        PostChangeGenerator::stationary(beta(3.0, 2.0)),
        vec![b],
        71,
    );
    spec.alpha = Some(alpha);
    // Censored runs count at the default cap of 50 / alpha, so the mean is a
    // lower bound either way.
    let m = estimate_mtfa(&spec, b).unwrap();
    assert!(m.mean >= 0.8 / alpha, "MTFA {} at b {b}", m.mean);
}

#[test]
fn curve_spec_roundtrips_through_json() {
    let mut spec = fig1_mct(vec![1.0, 2.0], 5);
    spec.post = PostChangeGenerator::random_param_beta(3.5, 4.5, 2.0).unwrap();
    spec.alpha = Some(0.01);
    let text = serde_json::to_string(&spec).unwrap();
    let back: CurveSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.effective_mtfa_cap(), 5000);
}

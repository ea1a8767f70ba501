//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run: cargo test --release -p qcd-core --test acceptance

use std::process::ExitCode;
use std::time::Instant;

use qcd_core::detectors::{
    CusumState, Detector, LogLikelihoodRatio, MctState, ObservationStream, TiltedCusum,
};
use qcd_core::distributions::{
    ChangePoint, DistributionSpec, ObservationSource, PostChangeGenerator,
};
use qcd_core::monitor::{monitor, MonitorConfig, SeriesRecord, ThresholdMode};
use qcd_core::simulation::{
    crossing_probabilities, delay_curve, estimate_mtfa, matched_comparison, operating_curve,
    scan_comparison, wald_inequality_check, CrossingSpec, CurveSpec, DetectorSpec, WaldSpec,
};
use qcd_core::thresholds::{bessel_k1, crossing_bound, mct_threshold_exact, r0, BoundForm};
use qcd_core::tilting::solve_lambda_star;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn beta(a: f64, b: f64) -> DistributionSpec {
    DistributionSpec::beta(a, b).unwrap()
}

fn stationary(a: f64, b: f64) -> PostChangeGenerator {
    PostChangeGenerator::stationary(beta(a, b))
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `e^z K1(z) = int_0^inf cosh(t) exp(-z (cosh t - 1)) dt`.
fn k1_oracle(z: f64) -> f64 {
    let upper = (1.0 + 800.0 / z).acosh();
    let scaled = simpson(0.0, upper, 400_000, |t| {
        t.cosh() * (-z * (t.cosh() - 1.0)).exp()
    });
    scaled * (-z).exp()
}

const MU0: f64 = 0.2;
const SIGMA0_SQ: f64 = 0.0076190;
const ETA: f64 = 0.21;

fn c01_recursion_equals_max_form() -> Verdict {
    let alphabet = [0.0, 0.25, 0.5, 0.75, 1.0];
    let pre =
        DistributionSpec::empirical_grid(alphabet.to_vec(), vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
    let post =
        DistributionSpec::empirical_grid(alphabet.to_vec(), vec![1.0, 1.0, 2.0, 3.0, 3.0]).unwrap();
    let llr_fn = LogLikelihoodRatio::new(pre.clone(), post.clone());
    let llr: Vec<f64> = alphabet.iter().map(|&x| llr_fn.eval(x)).collect();
    let center = 0.5 * (pre.mean() + post.mean());
    let z: Vec<f64> = alphabet.iter().map(|x| x - center).collect();

    fn max_form(seq: &[usize], inc: &[f64]) -> f64 {
        let mut best = 0.0f64;
        let mut tail = 0.0;
        for &s in seq.iter().rev() {
            tail += inc[s];
            best = best.max(tail);
        }
        best
    }

    struct Walk<'a> {
        llr: &'a [f64],
        z: &'a [f64],
        seq: Vec<usize>,
        max_err: f64,
        nodes: u64,
    }

    fn dfs(w: &mut Walk, cusum: CusumState, mct: MctState, depth: usize) {
        if depth == 12 {
            return;
        }
        for k in 0..5 {
            let x = k as f64 * 0.25;
            let mut c = cusum;
            let llr = w.llr;
            c.update(x, |_| llr[k]).unwrap();
            let mut m = mct;
            m.update(x);
            w.seq.push(k);
            let ec = (c.statistic - max_form(&w.seq, w.llr)).abs();
            let em = (m.statistic - max_form(&w.seq, w.z)).abs();
            w.max_err = w.max_err.max(ec).max(em);
            w.nodes += 1;
            dfs(w, c, m, depth + 1);
            w.seq.pop();
        }
    }

    let mut w = Walk {
        llr: &llr,
        z: &z,
        seq: Vec::with_capacity(12),
        max_err: 0.0,
        nodes: 0,
    };
    dfs(&mut w, CusumState::new(), MctState::with_center(center), 0);
    verdict(
        w.max_err <= 1e-12,
        format!(
            "{} prefixes, max |recursion - max form| = {:.2e}",
            w.nodes, w.max_err
        ),
    )
}

fn c02_gaussian_reduction() -> Verdict {
    let pre = DistributionSpec::gaussian(MU0, SIGMA0_SQ).unwrap();
    let model = solve_lambda_star(&pre, ETA).unwrap();
    let delta = 0.5 * (ETA - MU0);
    let scale = 2.0 * delta / SIGMA0_SQ;
    let center = MU0 + delta;
    let src = ObservationSource::new(
        pre.clone(),
        PostChangeGenerator::stationary(DistributionSpec::gaussian(center, SIGMA0_SQ).unwrap()),
        ChangePoint::At(50_001),
        2,
    )
    .unwrap();
    let mut tilted = TiltedCusum::new(&model);
    let mut mct = MctState::new(MU0, ETA);
    let mut worst = 0.0f64;
    for t in 1..=100_000u64 {
        let x = src.observe_at(t);
        let a = tilted.observe(x).unwrap();
        let b = scale * mct.update(x);
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    verdict(
        worst <= 1e-10,
        format!("1e5 steps, max scaled difference {worst:.2e}"),
    )
}

fn c03_tilt_correctness() -> Verdict {
    let base = beta(4.0, 16.0);
    let m = solve_lambda_star(&base, ETA).unwrap();
    let residual = (base.cgf(m.lambda_star).kappa_prime - ETA).abs();
    // Beta(4,16) density with B(4,16) = 6 / (16 * 17 * 18 * 19).
    let pdf = |x: f64| x.powi(3) * (1.0 - x).powi(15) * (16.0 * 17.0 * 18.0 * 19.0) / 6.0;
    let l = m.lambda_star;
    let z = simpson(0.0, 1.0, 20_000, |x| (l * x).exp() * pdf(x));
    let mean = simpson(0.0, 1.0, 20_000, |x| x * (l * x).exp() * pdf(x)) / z;
    let kl_direct = simpson(0.0, 1.0, 20_000, |x| {
        let p = pdf(x);
        let q = (l * x).exp() * p / z;
        if q > 0.0 {
            q * (q / p).ln()
        } else {
            0.0
        }
    });
    let approx = 2.0 * (0.5 * (ETA - MU0)).powi(2) / base.variance();
    let pass = residual < 1e-10
        && (mean - ETA).abs() <= 1e-8
        && (m.kl - kl_direct).abs() <= 1e-8
        && ((m.kl - approx) / approx).abs() <= 0.10;
    verdict(
        pass,
        format!(
            "residual {residual:.1e}, tilted mean {mean:.10}, KL {:.6e} vs quadrature {kl_direct:.6e}, small-gap {approx:.4e}",
            m.kl
        ),
    )
}

fn tilted_spec(post: PostChangeGenerator, thresholds: Vec<f64>, seed: u64) -> CurveSpec {
    CurveSpec::new(
        DetectorSpec::TiltedCusum {
            base: beta(4.0, 16.0),
            eta: ETA,
        },
        beta(4.0, 16.0),
        post,
        thresholds,
        seed,
    )
}

fn c04_false_alarm_lower_bound() -> Verdict {
    let mut s = tilted_spec(stationary(4.5, 16.0), vec![4.0], 4);
    s.mtfa_trials = 2000;
    s.mtfa_cap = Some(100_000_000);
    let m = estimate_mtfa(&s, 4.0).unwrap();
    let lower = m.mean - 1.644_853_626_951_472 * m.ci_halfwidth / qcd_core::simulation::Z_95;
    let target = 4f64.exp();
    verdict(
        m.censored == 0 && lower >= target,
        format!(
            "MTFA {:.1} +- {:.1}, one-sided 95% lower {lower:.1} vs e^4 = {target:.1}, censored {}",
            m.mean, m.ci_halfwidth, m.censored
        ),
    )
}

fn c05_delay_slope() -> Verdict {
    let kl = solve_lambda_star(&beta(4.0, 16.0), ETA).unwrap().kl;
    let mut s = tilted_spec(stationary(4.2, 15.8), vec![4.0, 8.0], 5);
    s.trials = 10_000;
    let d = delay_curve(&s).unwrap();
    let ratios: Vec<f64> = d.iter().map(|e| e.mean * kl / e.threshold).collect();
    let pass = d.iter().all(|e| e.censored == 0) && ratios.iter().all(|r| (r - 1.0).abs() <= 0.15);
    verdict(
        pass,
        format!(
            "1/KL = {:.1}; b=4: WADD {:.1} +- {:.1}, (WADD/b)*KL = {:.3}; b=8: WADD {:.1} +- {:.1}, (WADD/b)*KL = {:.3}",
            1.0 / kl,
            d[0].mean,
            d[0].ci_halfwidth,
            ratios[0],
            d[1].mean,
            d[1].ci_halfwidth,
            ratios[1]
        ),
    )
}

fn c06_mct_near_optimal() -> Verdict {
    let post = stationary(4.5, 16.0);
    let mut tilted = tilted_spec(post.clone(), vec![2.0, 3.0, 4.0, 5.0], 6);
    tilted.mtfa_cap = Some(10_000_000);
    let mut mct = CurveSpec::new(
        DetectorSpec::Mct { mu0: MU0, eta: ETA },
        beta(4.0, 16.0),
        post,
        (2..=10).map(|k| k as f64 * 0.5).collect(),
        6,
    );
    mct.mtfa_cap = Some(10_000_000);
    let tc = operating_curve(&tilted).unwrap();
    let mc = operating_curve(&mct).unwrap();
    let matched = matched_comparison(&mc, &tc);
    let mut pass = tc.iter().chain(&mc).all(|p| p.censored_fraction == 0.0);
    let mut parts = Vec::new();
    for p in &matched {
        match p.reference_wadd {
            Some(m) => {
                let rel = (m - p.wadd) / p.wadd;
                pass &= rel.abs() <= 0.15;
                parts.push(format!(
                    "MTFA {:.0}: tilted {:.1}, MCT {:.1} ({:+.1}%)",
                    p.mtfa,
                    p.wadd,
                    m,
                    100.0 * rel
                ));
            }
            None => {
                pass = false;
                parts.push(format!("MTFA {:.0}: outside MCT curve", p.mtfa));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

fn c07_nonstationary_ordering() -> Verdict {
    let eta = 3.5 / 5.5;
    let spec = |post: PostChangeGenerator| {
        let mut s = CurveSpec::new(
            DetectorSpec::Mct { mu0: 0.5, eta },
            beta(2.0, 2.0),
            post,
            vec![0.5, 1.0, 2.0, 4.0, 8.0],
            7,
        );
        s.trials = 10_000;
        s
    };
    let st = delay_curve(&spec(stationary(3.5, 2.0))).unwrap();
    let ns = delay_curve(&spec(
        PostChangeGenerator::random_param_beta(3.5, 4.5, 2.0).unwrap(),
    ))
    .unwrap();
    let mut pass = true;
    let parts: Vec<String> = st
        .iter()
        .zip(&ns)
        .map(|(a, b)| {
            let slack = a.ci_halfwidth.hypot(b.ci_halfwidth);
            pass &= b.mean <= a.mean + slack;
            format!("b={}: {:.2} vs {:.2}", a.threshold, b.mean, a.mean)
        })
        .collect();
    verdict(
        pass,
        format!("non-stationary vs stationary WADD: {}", parts.join(", ")),
    )
}

fn c08_crossing_bound() -> Verdict {
    let spec = CrossingSpec {
        pre: beta(2.0, 2.0),
        eta: 0.6,
        trials: 100_000,
        seed: 8,
        cap: 1_000_000,
    };
    let est = crossing_probabilities(&spec, &[0.3, 0.5, 1.0]).unwrap();
    let mut pass = true;
    let mut parts: Vec<String> = est
        .iter()
        .map(|e| {
            pass &= e.censored == 0 && e.frequency <= e.bound;
            format!("b={}: {:.5} <= {:.5}", e.b, e.frequency, e.bound)
        })
        .collect();
    let (mu0, s2, delta) = (0.5, 0.05, 0.05);
    let r = r0(mu0, s2, delta).unwrap();
    let mut worst = 0.0f64;
    for arg in [10.0, 20.0, 50.0, 100.0, 300.0] {
        let b = arg * s2 / (r * r * delta);
        let bes = crossing_bound(b, mu0, s2, delta, BoundForm::Bessel).unwrap();
        let asy = crossing_bound(b, mu0, s2, delta, BoundForm::Asymptotic).unwrap();
        worst = worst.max(((bes.ln_value - asy.ln_value).exp() - 1.0).abs());
    }
    pass &= worst <= 0.05;
    parts.push(format!(
        "form mismatch for K1 argument >= 10 at most {:.2}%",
        100.0 * worst
    ));
    verdict(pass, parts.join("; "))
}

fn c09_threshold_solver() -> Verdict {
    let mut pass = true;
    let mut devs = Vec::new();
    for alpha in [1e-2, 1e-4, 1e-8] {
        let d = mct_threshold_exact(alpha, MU0, SIGMA0_SQ, ETA).unwrap();
        pass &= d.relative_residual < 1e-10;
        devs.push((
            alpha,
            d.b_tilde_prime,
            (d.b_tilde_prime / d.asymptotic_ratio - 1.0).abs(),
            d.relative_residual,
        ));
    }
    pass &= devs.windows(2).all(|w| w[1].2 < w[0].2);
    let parts: Vec<String> = devs
        .iter()
        .map(|(a, b, dev, res)| {
            format!("alpha {a:e}: b' {b:.4}, deviation {dev:.4}, residual {res:.1e}")
        })
        .collect();
    verdict(pass, parts.join("; "))
}

fn c10_bessel() -> Verdict {
    let mut worst = 0.0f64;
    for z in [0.1, 1.0, 2.0, 10.0, 50.0] {
        let rel = (bessel_k1(z).unwrap() / k1_oracle(z) - 1.0).abs();
        worst = worst.max(rel);
    }
    let mut worst_id = 0.0f64;
    for (u, v) in [(0.5, 0.5), (2.0, 1.0), (1.0, 3.0)] {
        // y = e^s
        let lhs = simpson(-60.0, 60.0, 600_000, |s: f64| {
            let y = s.exp();
            y * (-(u * y + v / y)).exp()
        });
        let rhs = 2.0 * (v / u).sqrt() * bessel_k1(2.0 * (u * v).sqrt()).unwrap();
        worst_id = worst_id.max((lhs / rhs - 1.0).abs());
    }
    verdict(
        worst <= 1e-8 && worst_id <= 1e-8,
        format!("K1 vs quadrature max rel {worst:.1e}; integral identity max rel {worst_id:.1e}"),
    )
}

fn c11_wald() -> Verdict {
    let eta = 3.5 / 5.5;
    let threshold = qcd_core::thresholds::mct_threshold_small_delta(0.01, 0.5, 0.05, eta).unwrap();
    let spec = |post| WaldSpec {
        pre: beta(2.0, 2.0),
        post,
        mu0: 0.5,
        eta,
        threshold,
        trials: 10_000,
        seed: 11,
        cap: 1_000_000,
    };
    let st = wald_inequality_check(&spec(stationary(3.5, 2.0))).unwrap();
    let ns = wald_inequality_check(&spec(
        PostChangeGenerator::random_param_beta(3.5, 4.5, 2.0).unwrap(),
    ))
    .unwrap();
    verdict(
        st.pass && ns.pass && st.censored == 0 && ns.censored == 0,
        format!(
            "stationary slack {:.4} (se {:.4}); non-stationary slack {:.4} (se {:.4})",
            st.mean_slack, st.slack_std_error, ns.mean_slack, ns.slack_std_error
        ),
    )
}

fn c12_scan_comparison() -> Verdict {
    let post = stationary(4.5, 16.0);
    let mut mct = CurveSpec::new(
        DetectorSpec::MctEstimated { eta: ETA },
        beta(4.0, 16.0),
        post.clone(),
        vec![0.3, 0.5, 0.8, 1.2, 1.6, 2.0, 2.5],
        12,
    );
    mct.warmup = 100;
    let mut scan = CurveSpec::new(
        DetectorSpec::Scan,
        beta(4.0, 16.0),
        post,
        vec![0.24, 0.27, 0.30, 0.33],
        12,
    );
    scan.warmup = 100;
    scan.trials = 2000;
    scan.mtfa_trials = 1000;
    scan.delay_cap = 50_000;
    scan.mtfa_cap = Some(50_000);
    let cmp = scan_comparison(&mct, &scan).unwrap();
    let mut pass = true;
    let parts: Vec<String> = cmp
        .matched
        .iter()
        .map(|p| match p.reference_wadd {
            Some(m) => {
                pass &= m < p.wadd;
                format!("MTFA {:.0}: MCT {:.1} < scan {:.1}", p.mtfa, m, p.wadd)
            }
            None => {
                pass = false;
                format!("MTFA {:.0}: outside MCT curve", p.mtfa)
            }
        })
        .collect();
    verdict(pass, parts.join("; "))
}

fn c13_monitor_pipeline() -> Verdict {
    let baseline = 1000u64;
    let post_len = 3000u64;
    let alpha = 0.01;
    let cfg = MonitorConfig {
        ma_window: 1,
        baseline_start: 1,
        baseline_end: baseline as i64,
        eta: Some(ETA),
        eta_multiplier: None,
        alpha,
        threshold_mode: ThresholdMode::SmallDelta,
    };
    let mu1 = 4.5 / 20.5;
    let center = 0.5 * (MU0 + ETA);
    let predicted = alpha.ln().abs() * SIGMA0_SQ / (ETA - MU0) / (mu1 - center);
    let series = 100u64;
    let mut delays = Vec::new();
    for id in 0..series {
        let src = ObservationSource::new(
            beta(4.0, 16.0),
            stationary(4.5, 16.0),
            ChangePoint::At(baseline + 1),
            13,
        )
        .unwrap()
        .with_stream(id);
        let records: Vec<SeriesRecord> = (1..=baseline + post_len)
            .map(|t| SeriesRecord::new(t as i64, src.observe_at(t), None).unwrap())
            .collect();
        let report = monitor(&records, &cfg).unwrap();
        if let Some(i) = report.alarm_index {
            delays.push((i - baseline as i64) as f64);
        }
    }
    let mean = delays.iter().sum::<f64>() / delays.len().max(1) as f64;
    let alarmed = delays.len() as u64 == series;

    let src = ObservationSource::new(
        beta(4.0, 16.0),
        stationary(4.0, 16.0),
        ChangePoint::Never,
        13,
    )
    .unwrap();
    let mut records: Vec<SeriesRecord> = (1..=baseline)
        .map(|t| SeriesRecord::new(t as i64, src.observe_at(t), None).unwrap())
        .collect();
    let mu_hat = records.iter().map(|r| r.fraction).sum::<f64>() / baseline as f64;
    records
        .extend((1..=500).map(|k| SeriesRecord::new((baseline + k) as i64, mu_hat, None).unwrap()));
    let flat = monitor(&records, &cfg).unwrap();
    let quiet = flat.alarm_index.is_none() && flat.trajectory.iter().all(|p| p.statistic == 0.0);

    verdict(
        alarmed && (mean / predicted - 1.0).abs() <= 0.5 && quiet,
        format!(
            "{}/{series} series alarmed, mean delay {mean:.1} vs renewal {predicted:.1}; constant series quiet: {quiet}",
            delays.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("recursion equals max form", c01_recursion_equals_max_form),
        ("Gaussian reduction identity", c02_gaussian_reduction),
        ("tilt correctness", c03_tilt_correctness),
        ("false-alarm lower bound", c04_false_alarm_lower_bound),
        ("delay slope", c05_delay_slope),
        ("MCT near-optimality", c06_mct_near_optimal),
        ("non-stationary ordering", c07_nonstationary_ordering),
        ("crossing bound validity", c08_crossing_bound),
        ("threshold solver", c09_threshold_solver),
        ("Bessel oracle", c10_bessel),
        ("Wald inequality", c11_wald),
        ("scan comparison", c12_scan_comparison),
        ("monitor pipeline", c13_monitor_pipeline),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {:>2} {} {name} [{secs:.1}s]: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

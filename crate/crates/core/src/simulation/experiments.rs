use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{operating_curve, wadd_at_mtfa, CurveSpec, OperatingPoint};
use crate::detectors::ObservationStream;
use crate::distributions::{ChangePoint, DistributionSpec, ObservationSource, PostChangeGenerator};
use crate::error::{param, Error, Result};
use crate::thresholds::{crossing_bound, BoundForm};

/// Upper-exit experiment for the pre-change walk `S_t = sum (x_i - center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSpec {
    pub pre: DistributionSpec,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Steps after which an unfinished walk is counted as censored.
    pub cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub b: f64,
    pub trials: usize,
    pub upper_exits: usize,
    pub censored: usize,
    pub frequency: f64,
    pub std_error: f64,
    /// Bessel-form bound clamped to `[0, 1]`.
    pub bound: f64,
    pub bound_raw: f64,
}

/// Walks until the first nonpositive value, the largest level, or the cap.
/// Returns the running maximum before the lower exit and whether the walk
/// was cut off by the cap.
fn walk_max<S: ObservationStream>(src: &S, center: f64, top: f64, cap: u64) -> (f64, bool) {
    let mut s = 0.0;
    let mut max = 0.0f64;
    for t in 1..=cap {
        s += src.observe_at(t) - center;
        if s <= 0.0 {
            return (max, false);
        }
        max = max.max(s);
        if s >= top {
            return (max, false);
        }
    }
    (max, true)
}

/// Exit frequencies at several levels using the same walks for every level,
/// so the frequencies are nonincreasing in `b`.
pub fn crossing_probabilities(
    spec: &CrossingSpec,
    levels: &[f64],
) -> Result<Vec<CrossingEstimate>> {
    if levels.is_empty() || levels.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(param("levels must be positive and finite"));
    }
    if spec.trials == 0 || spec.cap == 0 {
        return Err(param("trials and cap must be positive"));
    }
    let mu0 = spec.pre.mean();
    let sigma0_sq = spec.pre.variance();
    let delta = 0.5 * (spec.eta - mu0);
    if !(delta > 0.0) {
        return Err(Error::NoMeanIncrease {
            eta: spec.eta,
            mean: mu0,
        });
    }
    let center = mu0 + delta;
    let top = levels.iter().copied().fold(f64::MIN, f64::max);
    let source = ObservationSource::new(
        spec.pre.clone(),
        PostChangeGenerator::stationary(spec.pre.clone()),
        ChangePoint::Never,
        spec.seed,
    )?;
    let walks: Vec<(f64, bool)> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|id| walk_max(&source.with_stream(id), center, top, spec.cap))
        .collect();
    levels
        .iter()
        .map(|&b| {
            let upper = walks.iter().filter(|(m, _)| *m >= b).count();
            let censored = walks.iter().filter(|(m, c)| *c && *m < b).count();
            let n = spec.trials as f64;
            let p = upper as f64 / n;
            let bound = crossing_bound(b, mu0, sigma0_sq, delta, BoundForm::Bessel)?;
            Ok(CrossingEstimate {
                b,
                trials: spec.trials,
                upper_exits: upper,
                censored,
                frequency: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
                bound: bound.clamped,
                bound_raw: bound.raw,
            })
        })
        .collect()
}

/// Upper-exit frequency at a single level.
pub fn crossing_probability_trial(spec: &CrossingSpec, b: f64) -> Result<CrossingEstimate> {
    Ok(crossing_probabilities(spec, &[b])?[0])
}

/// Wald-type check on MCT runs started at the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldSpec {
    pub pre: DistributionSpec,
    pub post: PostChangeGenerator,
    pub mu0: f64,
    pub eta: f64,
    pub threshold: f64,
    pub trials: usize,
    pub seed: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    pub delta: f64,
    pub trials: usize,
    pub censored: usize,
    pub mean_sum: f64,
    pub mean_stop_time: f64,
    /// Mean of `sum_{t <= T} Z_t - delta * T`.
    pub mean_slack: f64,
    pub slack_std_error: f64,
    /// `mean_slack >= -3 * slack_std_error`.
    pub pass: bool,
}

/// One MCT run from zero: `(sum of increments, stopping time, censored)`.
pub fn wald_trial<S: ObservationStream>(
    src: &S,
    center: f64,
    threshold: f64,
    cap: u64,
) -> (f64, u64, bool) {
    let mut stat = 0.0f64;
    let mut sum = 0.0;
    for t in 1..=cap {
        let z = src.observe_at(t) - center;
        sum += z;
        stat = (stat + z).max(0.0);
        if stat >= threshold {
            return (sum, t, false);
        }
    }
    (sum, cap, true)
}

/// Summarizes `(sum, stopping time)` pairs.
pub fn wald_report_from_runs(runs: &[(f64, u64)], delta: f64, censored: usize) -> WaldReport {
    let n = runs.len();
    let nf = n as f64;
    let slack: Vec<f64> = runs.iter().map(|(s, t)| s - delta * *t as f64).collect();
    let mean_slack = slack.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        slack.iter().map(|v| (v - mean_slack).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let se = (var / nf).sqrt();
    WaldReport {
        delta,
        trials: n,
        censored,
        mean_sum: runs.iter().map(|r| r.0).sum::<f64>() / nf,
        mean_stop_time: runs.iter().map(|r| r.1 as f64).sum::<f64>() / nf,
        mean_slack,
        slack_std_error: se,
        pass: mean_slack >= -3.0 * se,
    }
}

/// Monte Carlo check that `E[sum_{t <= T} Z_t] >= delta * E[T]`.
pub fn wald_inequality_check(spec: &WaldSpec) -> Result<WaldReport> {
    let delta = 0.5 * (spec.eta - spec.mu0);
    if !(delta > 0.0) {
        return Err(Error::NoMeanIncrease {
            eta: spec.eta,
            mean: spec.mu0,
        });
    }
    if spec.trials < 2 || spec.cap == 0 {
        return Err(param("need at least two trials and a positive cap"));
    }
    spec.post.validate()?;
    spec.post.check_min_mean(spec.eta)?;
    let center = spec.mu0 + delta;
    let source = ObservationSource::new(
        spec.pre.clone(),
        spec.post.clone(),
        ChangePoint::At(1),
        spec.seed,
    )?;
    let runs: Vec<(f64, u64, bool)> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|id| wald_trial(&source.with_stream(id), center, spec.threshold, spec.cap))
        .collect();
    let censored = runs.iter().filter(|r| r.2).count();
    let pairs: Vec<(f64, u64)> = runs.iter().map(|r| (r.0, r.1)).collect();
    Ok(wald_report_from_runs(&pairs, delta, censored))
}

/// A candidate operating point set against a reference curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPoint {
    pub threshold: f64,
    pub mtfa: f64,
    pub wadd: f64,
    /// Reference delay interpolated at this MTFA; `None` outside its range.
    pub reference_wadd: Option<f64>,
}

pub fn matched_comparison(
    reference: &[OperatingPoint],
    candidate: &[OperatingPoint],
) -> Vec<MatchedPoint> {
    candidate
        .iter()
        .map(|p| MatchedPoint {
            threshold: p.threshold,
            mtfa: p.mtfa,
            wadd: p.wadd,
            reference_wadd: wadd_at_mtfa(reference, p.mtfa),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanComparison {
    pub mct: Vec<OperatingPoint>,
    pub scan: Vec<OperatingPoint>,
    /// Scan points with the MCT delay at the same MTFA as reference.
    pub matched: Vec<MatchedPoint>,
}

/// Both curves and the scan points matched against the MCT curve.
pub fn scan_comparison(mct: &CurveSpec, scan: &CurveSpec) -> Result<ScanComparison> {
    let mct_curve = operating_curve(mct)?;
    let scan_curve = operating_curve(scan)?;
    let matched = matched_comparison(&mct_curve, &scan_curve);
    Ok(ScanComparison {
        mct: mct_curve,
        scan: scan_curve,
        matched,
    })
}

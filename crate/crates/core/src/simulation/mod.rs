//! Monte Carlo estimation of detection delay and mean time to false alarm.
//!
//! Trial `i` always reads the observation substream `i`, for every threshold,
//! so stopping times are pathwise monotone along a curve and results do not
//! depend on how rayon schedules the trials. Per-trial outcomes are collected
//! in trial order and reduced sequentially.

mod experiments;

pub use experiments::{
    crossing_probabilities, crossing_probability_trial, matched_comparison, scan_comparison,
    wald_inequality_check, wald_report_from_runs, CrossingEstimate, CrossingSpec, MatchedPoint,
    ScanComparison, WaldReport, WaldSpec,
};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{
    Detector, KnownCusum, LogLikelihoodRatio, MctState, ObservationStream, ScanState, TiltedCusum,
};
use crate::distributions::{ChangePoint, DistributionSpec, ObservationSource, PostChangeGenerator};
use crate::error::{param, Error, Result};
use crate::rng::derive_key;
use crate::tilting::solve_lambda_star;

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
const MTFA_TAG: u64 = 0x4D54_4641;
const RELIABILITY_CENSOR_FRACTION: f64 = 0.01;

/// Default cap on pre-change runs: `50 / alpha`.
pub fn default_mtfa_cap(alpha: f64) -> u64 {
    (50.0 / alpha).ceil() as u64
}

/// Which statistic a curve evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    /// CuSum with both laws known.
    Cusum {
        pre: DistributionSpec,
        post: DistributionSpec,
    },
    /// CuSum against the tilt of `base` to mean `eta`.
    TiltedCusum { base: DistributionSpec, eta: f64 },
    /// MCT with known pre-change mean.
    Mct { mu0: f64, eta: f64 },
    /// MCT whose `mu0` is the mean of the warmup samples of each trial.
    MctEstimated { eta: f64 },
    /// Unwindowed scan statistic.
    Scan,
}

impl DetectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cusum { .. } => "cusum",
            Self::TiltedCusum { .. } => "tilted_cusum",
            Self::Mct { .. } => "mct",
            Self::MctEstimated { .. } => "mct_estimated",
            Self::Scan => "scan",
        }
    }

    fn eta(&self) -> Option<f64> {
        match self {
            Self::TiltedCusum { eta, .. } | Self::Mct { eta, .. } | Self::MctEstimated { eta } => {
                Some(*eta)
            }
            _ => None,
        }
    }
}

/// Detector parameters resolved once per curve.
#[derive(Debug, Clone)]
enum Prepared {
    Cusum(LogLikelihoodRatio),
    Tilted { lambda: f64, kappa: f64 },
    Mct { center: f64 },
    MctEstimated { eta: f64 },
    Scan,
}

#[derive(Debug, Clone)]
enum AnyDetector {
    Cusum(KnownCusum),
    Tilted(TiltedCusum),
    Mct(MctState),
    Scan(ScanState),
}

impl Detector for AnyDetector {
    fn observe(&mut self, x: f64) -> Result<f64> {
        match self {
            Self::Cusum(d) => d.observe(x),
            Self::Tilted(d) => d.observe(x),
            Self::Mct(d) => d.observe(x),
            Self::Scan(d) => d.observe(x),
        }
    }
    fn statistic(&self) -> f64 {
        match self {
            Self::Cusum(d) => d.statistic(),
            Self::Tilted(d) => d.statistic(),
            Self::Mct(d) => d.statistic(),
            Self::Scan(d) => d.statistic(),
        }
    }
    fn steps(&self) -> u64 {
        match self {
            Self::Cusum(d) => d.steps(),
            Self::Tilted(d) => d.steps(),
            Self::Mct(d) => d.steps(),
            Self::Scan(d) => d.steps(),
        }
    }
    fn reset(&mut self) {
        match self {
            Self::Cusum(d) => d.reset(),
            Self::Tilted(d) => d.reset(),
            Self::Mct(d) => d.reset(),
            Self::Scan(d) => d.reset(),
        }
    }
}

impl Prepared {
    fn new(spec: &DetectorSpec) -> Result<Self> {
        Ok(match spec {
            DetectorSpec::Cusum { pre, post } => {
                Self::Cusum(LogLikelihoodRatio::new(pre.clone(), post.clone()))
            }
            DetectorSpec::TiltedCusum { base, eta } => {
                let m = solve_lambda_star(base, *eta)?;
                Self::Tilted {
                    lambda: m.lambda_star,
                    kappa: m.kappa_at_lambda_star,
                }
            }
            DetectorSpec::Mct { mu0, eta } => Self::Mct {
                center: 0.5 * (mu0 + eta),
            },
            DetectorSpec::MctEstimated { eta } => Self::MctEstimated { eta: *eta },
            DetectorSpec::Scan => Self::Scan,
        })
    }

    /// A fresh detector, plus the time index it starts reading at.
    fn start<S: ObservationStream>(&self, source: &S, warmup: u64) -> (AnyDetector, u64) {
        match self {
            Self::Cusum(llr) => (AnyDetector::Cusum(KnownCusum::from_llr(llr.clone())), 1),
            Self::Tilted { lambda, kappa } => (
                AnyDetector::Tilted(TiltedCusum::from_parts(*lambda, *kappa)),
                1,
            ),
            Self::Mct { center } => (AnyDetector::Mct(MctState::with_center(*center)), 1),
            Self::MctEstimated { eta } => {
                let mu0 = (1..=warmup).map(|t| source.observe_at(t)).sum::<f64>() / warmup as f64;
                (AnyDetector::Mct(MctState::new(mu0, *eta)), warmup + 1)
            }
            Self::Scan => (AnyDetector::Scan(ScanState::new()), 1),
        }
    }

    fn consumes_warmup(&self) -> bool {
        matches!(self, Self::MctEstimated { .. })
    }
}

fn serde_default_trials() -> usize {
    10_000
}
fn serde_default_mtfa_trials() -> usize {
    2_000
}
fn serde_default_cap() -> u64 {
    1_000_000
}

/// Everything needed to trace one operating curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub detector: DetectorSpec,
    pub pre: DistributionSpec,
    pub post: PostChangeGenerator,
    /// Strictly increasing.
    pub thresholds: Vec<f64>,
    /// Delay trials per threshold.
    #[serde(default = "serde_default_trials")]
    pub trials: usize,
    /// Pre-change trials per threshold.
    #[serde(default = "serde_default_mtfa_trials")]
    pub mtfa_trials: usize,
    /// Maximum delay observed per trial.
    #[serde(default = "serde_default_cap")]
    pub delay_cap: u64,
    /// Maximum pre-change run; defaults to `50 / alpha` when `alpha` is
    /// given, otherwise `10^6`.
    #[serde(default)]
    pub mtfa_cap: Option<u64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Pre-change samples before the change. The MCT-with-estimated-mean
    /// detector uses them to estimate `mu0`; other detectors see them and may
    /// alarm early.
    #[serde(default)]
    pub warmup: u64,
    pub seed: u64,
}

impl CurveSpec {
    pub fn new(
        detector: DetectorSpec,
        pre: DistributionSpec,
        post: PostChangeGenerator,
        thresholds: Vec<f64>,
        seed: u64,
    ) -> Self {
        Self {
            detector,
            pre,
            post,
            thresholds,
            trials: serde_default_trials(),
            mtfa_trials: serde_default_mtfa_trials(),
            delay_cap: serde_default_cap(),
            mtfa_cap: None,
            alpha: None,
            warmup: 0,
            seed,
        }
    }

    pub fn effective_mtfa_cap(&self) -> u64 {
        self.mtfa_cap
            .or(self.alpha.map(default_mtfa_cap))
            .unwrap_or(serde_default_cap())
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(param("at least one threshold is required"));
        }
        if self.thresholds.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(param("thresholds must be finite and nonnegative"));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("thresholds must be strictly increasing"));
        }
        if self.trials < 100 || self.mtfa_trials < 100 {
            return Err(param("at least 100 trials per point are required"));
        }
        if self.delay_cap == 0 || self.mtfa_cap == Some(0) {
            return Err(param("caps must be at least 1"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(param("alpha must lie in (0, 1)"));
            }
        }
        if matches!(self.detector, DetectorSpec::MctEstimated { .. }) && self.warmup == 0 {
            return Err(param(
                "estimated-mean MCT needs a warmup of at least one sample",
            ));
        }
        self.post.validate()?;
        if let Some(eta) = self.detector.eta() {
            self.post.check_min_mean(eta)?;
        }
        Ok(())
    }

    fn source(&self, change_point: ChangePoint, seed: u64) -> Result<ObservationSource> {
        ObservationSource::new(self.pre.clone(), self.post.clone(), change_point, seed)
    }
}

/// One trial's result for one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub trial_id: u64,
    /// Delay `tau - nu + 1` (delay runs) or run length (false-alarm runs);
    /// equals the cap when censored.
    pub stop_time: u64,
    pub censored: bool,
    /// The detector alarmed before the change (delay runs with warmup only).
    pub early_alarm: bool,
}

/// First time the statistic reaches each threshold (thresholds ascending).
/// Unreached thresholds report `(cap, true)`.
fn first_passages<D: Detector, S: ObservationStream>(
    detector: &mut D,
    source: &S,
    first_t: u64,
    thresholds: &[f64],
    cap: u64,
) -> Result<Vec<(u64, bool)>> {
    let mut out = vec![(cap, true); thresholds.len()];
    let mut next = 0;
    for n in 1..=cap {
        let stat = detector.observe(source.observe_at(first_t + n - 1))?;
        while next < thresholds.len() && stat >= thresholds[next] {
            out[next] = (n, false);
            next += 1;
        }
        if next == thresholds.len() {
            break;
        }
    }
    Ok(out)
}

fn delay_outcomes(spec: &CurveSpec, thresholds: &[f64]) -> Result<Vec<Vec<TrialOutcome>>> {
    spec.validate()?;
    let prepared = Prepared::new(&spec.detector)?;
    let base = spec.source(ChangePoint::At(spec.warmup + 1), spec.seed)?;
    (0..spec.trials as u64)
        .into_par_iter()
        .map(|id| {
            let src = base.with_stream(id);
            let (mut det, first_t) = prepared.start(&src, spec.warmup);
            let skip = if prepared.consumes_warmup() {
                0
            } else {
                spec.warmup
            };
            let passages =
                first_passages(&mut det, &src, first_t, thresholds, spec.delay_cap + skip)?;
            Ok(passages
                .into_iter()
                .map(|(n, censored)| TrialOutcome {
                    trial_id: id,
                    stop_time: n.saturating_sub(skip),
                    censored,
                    early_alarm: !censored && n <= skip,
                })
                .collect())
        })
        .collect()
}

fn mtfa_outcomes(spec: &CurveSpec, thresholds: &[f64]) -> Result<Vec<Vec<TrialOutcome>>> {
    spec.validate()?;
    let prepared = Prepared::new(&spec.detector)?;
    let cap = spec.effective_mtfa_cap();
    let base = spec.source(ChangePoint::Never, derive_key(&[spec.seed, MTFA_TAG]))?;
    (0..spec.mtfa_trials as u64)
        .into_par_iter()
        .map(|id| {
            let src = base.with_stream(id);
            let (mut det, first_t) = prepared.start(&src, spec.warmup);
            let passages = first_passages(&mut det, &src, first_t, thresholds, cap)?;
            Ok(passages
                .into_iter()
                .map(|(n, censored)| TrialOutcome {
                    trial_id: id,
                    stop_time: n,
                    censored,
                    early_alarm: false,
                })
                .collect())
        })
        .collect()
}

/// Mean and 95% normal-approximation halfwidth.
fn mean_ci(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY, n);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Z_95 * (var / n as f64).sqrt(), n)
}

/// Detection-delay estimate at one threshold, with the change at
/// `warmup + 1` and the statistic started from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub threshold: f64,
    pub mean: f64,
    pub ci_halfwidth: f64,
    /// Trials that reached the change without alarming.
    pub trials: usize,
    pub censored: usize,
    pub censored_fraction: f64,
    /// Trials discarded because the detector alarmed before the change.
    pub early_alarms: usize,
    /// More than 1% of the trials hit the cap.
    pub reliability_warning: bool,
}

impl DelayEstimate {
    fn from_outcomes(threshold: f64, outcomes: &[TrialOutcome]) -> Self {
        let valid = outcomes.iter().filter(|o| !o.early_alarm);
        let (mean, ci, n) = mean_ci(valid.clone().map(|o| o.stop_time as f64));
        let censored = valid.filter(|o| o.censored).count();
        let censored_fraction = if n == 0 {
            1.0
        } else {
            censored as f64 / n as f64
        };
        Self {
            threshold,
            mean,
            ci_halfwidth: ci,
            trials: n,
            censored,
            censored_fraction,
            early_alarms: outcomes.len() - n,
            reliability_warning: censored_fraction > RELIABILITY_CENSOR_FRACTION,
        }
    }
}

/// Mean time to false alarm at one threshold. With any censored trial the
/// mean of the capped run lengths is reported as a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtfaEstimate {
    pub threshold: f64,
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub trials: usize,
    pub censored: usize,
    pub lower_bound: bool,
}

impl MtfaEstimate {
    fn from_outcomes(threshold: f64, outcomes: &[TrialOutcome]) -> Self {
        let (mean, ci, n) = mean_ci(outcomes.iter().map(|o| o.stop_time as f64));
        let censored = outcomes.iter().filter(|o| o.censored).count();
        Self {
            threshold,
            mean,
            ci_halfwidth: ci,
            trials: n,
            censored,
            lower_bound: censored > 0,
        }
    }

    pub fn far(&self) -> f64 {
        1.0 / self.mean
    }
}

fn column(outcomes: &[Vec<TrialOutcome>], j: usize) -> Vec<TrialOutcome> {
    outcomes.iter().map(|per| per[j]).collect()
}

/// Worst-case delay estimate (change at `warmup + 1`, statistic from zero).
pub fn estimate_wadd(spec: &CurveSpec, threshold: f64) -> Result<DelayEstimate> {
    let outcomes = delay_outcomes(spec, &[threshold])?;
    Ok(DelayEstimate::from_outcomes(
        threshold,
        &column(&outcomes, 0),
    ))
}

/// Mean time to false alarm with no change.
pub fn estimate_mtfa(spec: &CurveSpec, threshold: f64) -> Result<MtfaEstimate> {
    let outcomes = mtfa_outcomes(spec, &[threshold])?;
    Ok(MtfaEstimate::from_outcomes(
        threshold,
        &column(&outcomes, 0),
    ))
}

/// One point of a FAR-versus-delay curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub detector: String,
    pub threshold: f64,
    pub mtfa: f64,
    pub mtfa_ci: f64,
    pub mtfa_lower_bound: bool,
    /// `1 / mtfa`.
    pub far: f64,
    pub wadd: f64,
    pub wadd_ci: f64,
    pub trials: usize,
    /// Censored runs over all delay and false-alarm runs.
    pub censored_fraction: f64,
    pub early_alarms: usize,
    pub reliability_warning: bool,
}

impl OperatingPoint {
    pub fn new(detector: &str, delay: &DelayEstimate, mtfa: &MtfaEstimate) -> Self {
        let runs = (delay.trials + mtfa.trials).max(1);
        Self {
            detector: detector.to_string(),
            threshold: delay.threshold,
            mtfa: mtfa.mean,
            mtfa_ci: mtfa.ci_halfwidth,
            mtfa_lower_bound: mtfa.lower_bound,
            far: 1.0 / mtfa.mean,
            wadd: delay.mean,
            wadd_ci: delay.ci_halfwidth,
            trials: delay.trials,
            censored_fraction: (delay.censored + mtfa.censored) as f64 / runs as f64,
            early_alarms: delay.early_alarms,
            reliability_warning: delay.reliability_warning,
        }
    }
}

/// Delay and false-alarm estimates at every threshold of `spec`.
pub fn operating_curve(spec: &CurveSpec) -> Result<Vec<OperatingPoint>> {
    let delays = delay_outcomes(spec, &spec.thresholds)?;
    let mtfas = mtfa_outcomes(spec, &spec.thresholds)?;
    let name = spec.detector.name();
    Ok(spec
        .thresholds
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let d = DelayEstimate::from_outcomes(b, &column(&delays, j));
            let m = MtfaEstimate::from_outcomes(b, &column(&mtfas, j));
            OperatingPoint::new(name, &d, &m)
        })
        .collect())
}

/// Delay estimates only, for every threshold of `spec`.
pub fn delay_curve(spec: &CurveSpec) -> Result<Vec<DelayEstimate>> {
    let delays = delay_outcomes(spec, &spec.thresholds)?;
    Ok(spec
        .thresholds
        .iter()
        .enumerate()
        .map(|(j, &b)| DelayEstimate::from_outcomes(b, &column(&delays, j)))
        .collect())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    detector: &'a str,
    threshold: f64,
    mtfa: f64,
    mtfa_ci: f64,
    far: f64,
    wadd: f64,
    wadd_ci: f64,
    trials: usize,
    censored_fraction: f64,
}

/// Writes `detector,threshold,mtfa,mtfa_ci,far,wadd,wadd_ci,trials,censored_fraction`.
pub fn write_curve_csv<W: Write>(points: &[OperatingPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(CsvRow {
            detector: &p.detector,
            threshold: p.threshold,
            mtfa: p.mtfa,
            mtfa_ci: p.mtfa_ci,
            far: p.far,
            wadd: p.wadd,
            wadd_ci: p.wadd_ci,
            trials: p.trials,
            censored_fraction: p.censored_fraction,
        })?;
    }
    w.flush().map_err(Error::from)
}

/// Linear interpolation of delay against `ln(mtfa)` along a curve.
/// `None` outside the curve's MTFA range.
pub fn wadd_at_mtfa(curve: &[OperatingPoint], mtfa: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.mtfa.ln(), p.wadd)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x = mtfa.ln();
    pts.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x >= x0 && x <= x1 {
            if x1 == x0 {
                Some(y0)
            } else {
                Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
            }
        } else {
            None
        }
    })
}

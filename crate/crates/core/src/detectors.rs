//! Streaming detector state machines and the threshold stopping rule.
//!
//! All recursive statistics share the reflected form
//! `stat(t) = max(0, stat(t-1) + increment(x_t))` with `stat(0) = 0`, which
//! equals `max over k <= t+1 of sum_{i=k..t} increment(x_i)`.

use std::io::Write;

use crate::distributions::{DistributionSpec, Law};
use crate::error::{Error, Result};
use crate::tilting::TiltedModel;

/// A streaming statistic that can be compared against a threshold.
pub trait Detector {
    /// Consumes one observation and returns the updated statistic.
    fn observe(&mut self, x: f64) -> Result<f64>;
    fn statistic(&self) -> f64;
    /// Number of observations consumed.
    fn steps(&self) -> u64;
    fn reset(&mut self);
}

/// Page's CuSum statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CusumState {
    pub statistic: f64,
    pub t: u64,
}

impl CusumState {
    pub fn new() -> Self {
        Self::default()
    }

    /// `statistic <- max(0, statistic + loglr(x))`.
    pub fn update<F: Fn(f64) -> f64>(&mut self, x: f64, loglr: F) -> Result<f64> {
        let inc = loglr(x);
        if !inc.is_finite() {
            return Err(Error::Numeric(format!(
                "log-likelihood ratio at x = {x} is {inc}"
            )));
        }
        self.statistic = (self.statistic + inc).max(0.0);
        self.t += 1;
        Ok(self.statistic)
    }

    /// Update with the affine increment `lambda* x - kappa0(lambda*)`.
    pub fn update_tilted(&mut self, x: f64, model: &TiltedModel) -> Result<f64> {
        self.update(x, |v| model.log_lr(v))
    }
}

/// Log-likelihood ratio `ln p1(x) - ln p0(x)` between two known laws.
#[derive(Debug, Clone)]
pub struct LogLikelihoodRatio {
    pre: DistributionSpec,
    post: DistributionSpec,
    /// Beta/Beta shortcut: `(a1-a0) ln x + (b1-b0) ln(1-x) + c`.
    beta_terms: Option<(f64, f64, f64)>,
}

impl LogLikelihoodRatio {
    pub fn new(pre: DistributionSpec, post: DistributionSpec) -> Self {
        let beta_terms = match (pre.law(), post.law()) {
            (Law::Beta { a: a0, b: b0 }, Law::Beta { a: a1, b: b1 }) => {
                let c = post.ln_pdf(0.5).unwrap()
                    - pre.ln_pdf(0.5).unwrap()
                    - (a1 - a0) * 0.5f64.ln()
                    - (b1 - b0) * 0.5f64.ln();
                Some((a1 - a0, b1 - b0, c))
            }
            _ => None,
        };
        Self {
            pre,
            post,
            beta_terms,
        }
    }

    /// `NaN` outside the common support, which the CuSum update rejects.
    pub fn eval(&self, x: f64) -> f64 {
        if let Some((da, db, c)) = self.beta_terms {
            if !(0.0..=1.0).contains(&x) {
                return f64::NAN;
            }
            let term = |k: f64, y: f64| if k == 0.0 { 0.0 } else { k * y.ln() };
            return term(da, x) + term(db, 1.0 - x) + c;
        }
        match (self.post.ln_pdf(x), self.pre.ln_pdf(x)) {
            (Ok(a), Ok(b)) => a - b,
            _ => f64::NAN,
        }
    }
}

/// CuSum with known pre- and post-change laws.
#[derive(Debug, Clone)]
pub struct KnownCusum {
    pub state: CusumState,
    llr: LogLikelihoodRatio,
}

impl KnownCusum {
    pub fn new(pre: DistributionSpec, post: DistributionSpec) -> Self {
        Self {
            state: CusumState::new(),
            llr: LogLikelihoodRatio::new(pre, post),
        }
    }

    pub fn from_llr(llr: LogLikelihoodRatio) -> Self {
        Self {
            state: CusumState::new(),
            llr,
        }
    }
}

impl Detector for KnownCusum {
    fn observe(&mut self, x: f64) -> Result<f64> {
        let llr = &self.llr;
        self.state.update(x, |v| llr.eval(v))
    }
    fn statistic(&self) -> f64 {
        self.state.statistic
    }
    fn steps(&self) -> u64 {
        self.state.t
    }
    fn reset(&mut self) {
        self.state = CusumState::new();
    }
}

/// CuSum against the least-favorable tilted law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedCusum {
    pub state: CusumState,
    lambda_star: f64,
    kappa: f64,
}

impl TiltedCusum {
    pub fn new(model: &TiltedModel) -> Self {
        Self::from_parts(model.lambda_star, model.kappa_at_lambda_star)
    }

    pub fn from_parts(lambda_star: f64, kappa: f64) -> Self {
        Self {
            state: CusumState::new(),
            lambda_star,
            kappa,
        }
    }
}

impl Detector for TiltedCusum {
    fn observe(&mut self, x: f64) -> Result<f64> {
        let (l, k) = (self.lambda_star, self.kappa);
        self.state.update(x, |v| l * v - k)
    }
    fn statistic(&self) -> f64 {
        self.state.statistic
    }
    fn steps(&self) -> u64 {
        self.state.t
    }
    fn reset(&mut self) {
        self.state = CusumState::new();
    }
}

/// Mean-Change Test statistic: reflected sum of `x - (mu0 + eta) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MctState {
    pub statistic: f64,
    pub t: u64,
    pub center: f64,
    /// Observations seen outside `[0, 1]`. They are accepted; only the
    /// crossing-bound threshold design relies on the unit interval.
    pub out_of_unit_range: u64,
}

impl MctState {
    pub fn new(mu0: f64, eta: f64) -> Self {
        Self::with_center(0.5 * (mu0 + eta))
    }

    pub fn with_center(center: f64) -> Self {
        Self {
            statistic: 0.0,
            t: 0,
            center,
            out_of_unit_range: 0,
        }
    }

    pub fn update(&mut self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            self.out_of_unit_range += 1;
        }
        self.statistic = (self.statistic + (x - self.center)).max(0.0);
        self.t += 1;
        self.statistic
    }
}

impl Detector for MctState {
    fn observe(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("observation {x}")));
        }
        Ok(self.update(x))
    }
    fn statistic(&self) -> f64 {
        self.statistic
    }
    fn steps(&self) -> u64 {
        self.t
    }
    fn reset(&mut self) {
        *self = Self::with_center(self.center);
    }
}

/// Unwindowed scan statistic
/// `max over s in [2, t] of |mean(x_1..x_{s-1}) - mean(x_s..x_t)|`.
///
/// Keeps every prefix sum, so memory and per-step work are `O(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanState {
    /// `prefix_sums[k] = x_1 + ... + x_k`, with `prefix_sums[0] = 0`.
    pub prefix_sums: Vec<f64>,
    pub t: u64,
    statistic: f64,
}

impl Default for ScanState {
    fn default() -> Self {
        Self::new()
    }
}

impl ScanState {
    pub fn new() -> Self {
        Self {
            prefix_sums: vec![0.0],
            t: 0,
            statistic: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let last = *self.prefix_sums.last().unwrap();
        self.prefix_sums.push(last + x);
        self.t += 1;
    }

    /// Mean of `x_s..=x_e` (1-based, inclusive) from prefix sums.
    pub fn segment_mean(&self, s: usize, e: usize) -> f64 {
        (self.prefix_sums[e] - self.prefix_sums[s - 1]) / (e - s + 1) as f64
    }

    /// Current scan value; zero before two observations.
    pub fn scan_value(&self) -> f64 {
        let t = self.t as usize;
        let total = self.prefix_sums[t];
        let mut best = 0.0f64;
        for s in 2..=t {
            let head = self.prefix_sums[s - 1];
            let left = head / (s - 1) as f64;
            let right = (total - head) / (t - s + 1) as f64;
            best = best.max((left - right).abs());
        }
        best
    }

    /// Appends `x` and reports whether some split reaches `b`.
    pub fn step_and_decide(&mut self, x: f64, b: f64) -> bool {
        self.push(x);
        self.statistic = self.scan_value();
        self.t >= 2 && self.statistic >= b
    }
}

impl Detector for ScanState {
    fn observe(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("observation {x}")));
        }
        self.push(x);
        self.statistic = self.scan_value();
        Ok(self.statistic)
    }
    fn statistic(&self) -> f64 {
        self.statistic
    }
    fn steps(&self) -> u64 {
        self.t
    }
    fn reset(&mut self) {
        *self = Self::new();
    }
}

/// Threshold rule: alarm as soon as the statistic reaches `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub threshold: f64,
    /// Always `true`: the comparison is `>=`.
    pub inclusive: bool,
}

impl StoppingRule {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            inclusive: true,
        }
    }

    #[inline]
    pub fn alarm(&self, statistic: f64) -> bool {
        statistic >= self.threshold
    }
}

/// Anything that yields `X_t` for `t = 1, 2, ...`.
pub trait ObservationStream {
    fn observe_at(&self, t: u64) -> f64;
}

impl ObservationStream for crate::distributions::ObservationSource {
    fn observe_at(&self, t: u64) -> f64 {
        self.sample(t)
    }
}

impl<F: Fn(u64) -> f64> ObservationStream for F {
    fn observe_at(&self, t: u64) -> f64 {
        self(t)
    }
}

/// Result of running a detector until it alarms.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Number of observations consumed when the alarm fired, or `cap` when
    /// censored.
    pub stop_time: u64,
    pub censored: bool,
    /// `(t, statistic)` per step, relative to the first observation used.
    pub trajectory: Option<Vec<(u64, f64)>>,
}

/// Feeds `X_first, X_first+1, ...` to `detector` until the rule alarms or
/// `cap` observations have been used.
pub fn run_until_alarm_from<D, S>(
    detector: &mut D,
    source: &S,
    first_t: u64,
    rule: StoppingRule,
    cap: u64,
    record: bool,
) -> Result<RunOutcome>
where
    D: Detector + ?Sized,
    S: ObservationStream + ?Sized,
{
    if cap == 0 {
        return Err(Error::Parameter("cap must be at least 1".into()));
    }
    let mut trajectory = record.then(Vec::new);
    for n in 1..=cap {
        let stat = detector.observe(source.observe_at(first_t + n - 1))?;
        if let Some(tr) = trajectory.as_mut() {
            tr.push((n, stat));
        }
        if rule.alarm(stat) {
            return Ok(RunOutcome {
                stop_time: n,
                censored: false,
                trajectory,
            });
        }
    }
    Ok(RunOutcome {
        stop_time: cap,
        censored: true,
        trajectory,
    })
}

/// [`run_until_alarm_from`] starting at `t = 1`.
pub fn run_until_alarm<D, S>(
    detector: &mut D,
    source: &S,
    rule: StoppingRule,
    cap: u64,
    record: bool,
) -> Result<RunOutcome>
where
    D: Detector + ?Sized,
    S: ObservationStream + ?Sized,
{
    run_until_alarm_from(detector, source, 1, rule, cap, record)
}

/// Writes `t,statistic` rows with a header.
pub fn write_trajectory_csv<W: Write>(trajectory: &[(u64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "statistic"])?;
    for (t, s) in trajectory {
        w.write_record([t.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

//! Offline MCT monitoring of a recorded series.
//!
//! The pipeline is: ingest `index,value[,population]` rows, take a trailing
//! moving average of the fractions, estimate the pre-change mean and variance
//! on a baseline window, then run the MCT over every record after the window.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::MctState;
use crate::error::{param, Error, Result};
use crate::thresholds::{mct_threshold_exact, mct_threshold_small_delta};

pub const MIN_BASELINE_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub index: i64,
    pub raw_value: f64,
    pub population: Option<f64>,
    /// `raw_value / population`, or `raw_value` without a population.
    pub fraction: f64,
}

impl SeriesRecord {
    pub fn new(index: i64, raw_value: f64, population: Option<f64>) -> Result<Self> {
        if !(raw_value >= 0.0 && raw_value.is_finite()) {
            return Err(Error::Data(format!(
                "row {index}: value {raw_value} is not a nonnegative number"
            )));
        }
        let fraction = match population {
            Some(p) if !(p > 0.0 && p.is_finite()) => {
                return Err(Error::Data(format!(
                    "row {index}: population {p} must be positive"
                )));
            }
            Some(p) => raw_value / p,
            None => raw_value,
        };
        if population.is_some() && fraction > 1.0 {
            return Err(Error::Data(format!(
                "row {index}: value exceeds population"
            )));
        }
        Ok(Self {
            index,
            raw_value,
            population,
            fraction,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<SeriesRecord>,
    /// Rows skipped because a required field was empty.
    pub dropped: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    ingest_reader(std::fs::File::open(path)?)
}

pub fn ingest_reader<R: Read>(input: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let index_col = col("index").ok_or_else(|| Error::Schema("index".into()))?;
    let value_col = col("value").ok_or_else(|| Error::Schema("value".into()))?;
    let pop_col = col("population");

    let mut records: Vec<SeriesRecord> = Vec::new();
    let mut dropped = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let (idx, val) = (field(index_col), field(value_col));
        let pop = pop_col.map(field);
        if idx.is_empty() || val.is_empty() || pop == Some("") {
            dropped += 1;
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("data row {}: cannot parse {s:?}", row + 1)))
        };
        let index: i64 = idx.parse().map_err(|_| {
            Error::Data(format!(
                "data row {}: index {idx:?} is not an integer",
                row + 1
            ))
        })?;
        let population = pop.map(num).transpose()?;
        let r = SeriesRecord::new(index, num(val)?, population)?;
        if let Some(last) = records.last() {
            if r.index <= last.index {
                return Err(Error::Data(format!(
                    "index {} follows {}; indices must be strictly increasing",
                    r.index, last.index
                )));
            }
        }
        records.push(r);
    }
    Ok(Ingested { records, dropped })
}

/// Trailing `w`-point average. Output record `i` carries the index of input
/// record `i + w - 1`.
pub fn moving_average(records: &[SeriesRecord], w: usize) -> Result<Vec<SeriesRecord>> {
    if w == 0 {
        return Err(param("moving-average window must be at least 1"));
    }
    if records.len() < w {
        return Err(Error::Data(format!(
            "series of length {} is shorter than the window {w}",
            records.len()
        )));
    }
    if w == 1 {
        return Ok(records.to_vec());
    }
    let k = w as f64;
    Ok(records
        .windows(w)
        .map(|win| {
            let last = win[w - 1];
            SeriesRecord {
                index: last.index,
                raw_value: win.iter().map(|r| r.raw_value).sum::<f64>() / k,
                population: last.population,
                fraction: win.iter().map(|r| r.fraction).sum::<f64>() / k,
            }
        })
        .collect())
}

/// Sample mean and unbiased variance of the fractions with index in
/// `start..=end`.
pub fn estimate_baseline(records: &[SeriesRecord], start: i64, end: i64) -> Result<(f64, f64)> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::Precondition("empty series".into()));
    };
    if start > end || start < first.index || end > last.index {
        return Err(Error::Precondition(format!(
            "baseline [{start}, {end}] is not inside the series [{}, {}]",
            first.index, last.index
        )));
    }
    let window: Vec<f64> = records
        .iter()
        .filter(|r| (start..=end).contains(&r.index))
        .map(|r| r.fraction)
        .collect();
    if window.len() < MIN_BASELINE_LEN {
        return Err(Error::Precondition(format!(
            "baseline has {} records, at least {MIN_BASELINE_LEN} are required",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if window
        .iter()
        .all(|x| (x - mean).abs() <= 4.0 * f64::EPSILON * mean.abs())
    {
        return Err(Error::DegenerateBaseline);
    }
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    SmallDelta,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Absolute(f64),
    Multiplier(f64),
}

fn default_ma_window() -> usize {
    3
}

/// Flat configuration, e.g.
///
/// ```toml
/// ma_window = 3
/// baseline_start = 120
/// baseline_end = 150
/// eta_multiplier = 3.3
/// alpha = 0.01
/// threshold_mode = "small_delta"
/// ```
///
/// Give `eta` instead of `eta_multiplier` for an absolute post-change mean.
/// Without either, the multiplier defaults to 3.3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "default_ma_window")]
    pub ma_window: usize,
    pub baseline_start: i64,
    pub baseline_end: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_multiplier: Option<f64>,
    pub alpha: f64,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
}

impl MonitorConfig {
    pub const DEFAULT_MULTIPLIER: f64 = 3.3;

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| param(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eta_mode(&self) -> Result<EtaMode> {
        match (self.eta, self.eta_multiplier) {
            (Some(_), Some(_)) => Err(param("give either eta or eta_multiplier, not both")),
            (Some(e), None) => Ok(EtaMode::Absolute(e)),
            (None, Some(m)) => Ok(EtaMode::Multiplier(m)),
            (None, None) => Ok(EtaMode::Multiplier(Self::DEFAULT_MULTIPLIER)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ma_window == 0 {
            return Err(param("ma_window must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.baseline_end < self.baseline_start {
            return Err(param("baseline_end precedes baseline_start"));
        }
        if let EtaMode::Multiplier(m) = self.eta_mode()? {
            if !(m > 1.0) {
                return Err(param(format!("eta_multiplier must exceed 1, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub index: i64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub mu0_hat: f64,
    pub sigma0_sq_hat: f64,
    pub eta: f64,
    pub center: f64,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    /// First index whose statistic reaches the threshold.
    pub alarm_index: Option<i64>,
    /// Every record after the baseline; monitoring continues past the alarm.
    pub trajectory: Vec<TrajectoryPoint>,
}

pub fn monitor(records: &[SeriesRecord], cfg: &MonitorConfig) -> Result<MonitorReport> {
    cfg.validate()?;
    let smoothed = moving_average(records, cfg.ma_window)?;
    let (mu0, s2) = estimate_baseline(&smoothed, cfg.baseline_start, cfg.baseline_end)?;
    let eta = match cfg.eta_mode()? {
        EtaMode::Absolute(e) => e,
        EtaMode::Multiplier(m) => m * mu0,
    };
    if !(eta > mu0) {
        return Err(Error::NoMeanIncrease { eta, mean: mu0 });
    }
    let monitored: Vec<&SeriesRecord> = smoothed
        .iter()
        .filter(|r| r.index > cfg.baseline_end)
        .collect();
    let threshold = match cfg.threshold_mode {
        ThresholdMode::SmallDelta => mct_threshold_small_delta(cfg.alpha, mu0, s2, eta)?,
        ThresholdMode::Exact => {
            if let Some(r) = monitored
                .iter()
                .find(|r| !(0.0..=1.0).contains(&r.fraction))
            {
                return Err(Error::Precondition(format!(
                    "value {} at index {} is outside [0, 1]; the exact threshold needs bounded data",
                    r.fraction, r.index
                )));
            }
            mct_threshold_exact(cfg.alpha, mu0, s2, eta)?.b_tilde_prime
        }
    };
    let mut mct = MctState::new(mu0, eta);
    let mut alarm_index = None;
    let trajectory = monitored
        .iter()
        .map(|r| {
            let statistic = mct.update(r.fraction);
            if alarm_index.is_none() && statistic >= threshold {
                alarm_index = Some(r.index);
            }
            TrajectoryPoint {
                index: r.index,
                statistic,
            }
        })
        .collect();
    Ok(MonitorReport {
        mu0_hat: mu0,
        sigma0_sq_hat: s2,
        eta,
        center: mct.center,
        threshold,
        threshold_mode: cfg.threshold_mode,
        alarm_index,
        trajectory,
    })
}

/// Writes `index,statistic,threshold` rows.
pub fn write_report_trajectory<W: Write>(report: &MonitorReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "statistic", "threshold"])?;
    for p in &report.trajectory {
        w.write_record([
            p.index.to_string(),
            p.statistic.to_string(),
            report.threshold.to_string(),
        ])?;
    }
    w.flush().map_err(Error::from)
}

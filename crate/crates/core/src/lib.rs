//! Quickest detection of an increase in the mean of a data stream.
//!
//! The crate implements four sequential detectors and the machinery needed
//! to design and evaluate them:
//!
//! - [`detectors`]: Page's CuSum with known laws, the exponentially tilted
//!   (least-favorable) CuSum, the Mean-Change Test (MCT) and an unwindowed
//!   scan-statistic baseline.
//! - [`tilting`]: the least-favorable post-change law obtained by tilting the
//!   pre-change law to a target mean `eta`, its KL divergence and a numeric
//!   weak stochastic boundedness check.
//! - [`thresholds`]: `|ln alpha|`, the small-gap MCT threshold, the
//!   Bernstein/Bessel boundary-crossing bound and the corrected threshold
//!   solved from it.
//! - [`simulation`]: a seeded, parallel Monte Carlo harness for detection
//!   delay (WADD) and mean time to false alarm.
//! - [`monitor`]: offline monitoring of a real series (CSV ingest, trailing
//!   moving average, baseline estimation, MCT trajectory).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detectors;
pub mod distributions;
mod error;
pub mod monitor;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod thresholds;
pub mod tilting;

pub use error::{Error, Result};

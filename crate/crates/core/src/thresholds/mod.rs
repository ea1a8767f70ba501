//! Threshold design for CuSum-type tests and the Mean-Change Test.
//!
//! For observations in `[0, 1]` with pre-change mean `mu0`, variance
//! `sigma0^2` and half-gap `Delta = (eta - mu0) / 2`, the probability that the
//! random walk `S_t = sum (X_i - (mu0 + eta)/2)` leaves `(0, b)` through the
//! top is bounded (Bernstein plus an integral comparison) by
//!
//! ```text
//! 2 R0 (b / Delta) K1(R0^2 b Delta / sigma0^2) exp(-R0^2 Delta b / sigma0^2)
//!   ~ sqrt(2 pi sigma0^2 b / Delta^3) exp(-2 R0^2 Delta b / sigma0^2)
//! R0 = sigma0^2 / (sigma0^2 + Delta max(mu0, 1 - mu0) / 3)
//! ```
//!
//! Setting the asymptotic form equal to `alpha` gives the corrected MCT
//! threshold `b'`, which behaves like `b~ / R0^2` as `alpha -> 0`.
//! Everything exponential is handled as a logarithm.

mod bessel;

pub use bessel::{bessel_k1, bessel_k1_scaled, ln_bessel_k1};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

const SOLVE_TOL: f64 = 1e-12;
const BRACKET_FACTOR: f64 = 20.0;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(param(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Classical CuSum threshold `|ln alpha|`.
pub fn cusum_threshold(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha.ln().abs())
}

/// Small-gap MCT threshold `|ln alpha| sigma0^2 / (eta - mu0)`.
pub fn mct_threshold_small_delta(alpha: f64, mu0: f64, sigma0_sq: f64, eta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(sigma0_sq > 0.0) {
        return Err(param("sigma0_sq must be positive"));
    }
    if !(eta > mu0) {
        return Err(Error::NoMeanIncrease { eta, mean: mu0 });
    }
    Ok(alpha.ln().abs() * sigma0_sq / (eta - mu0))
}

/// Bernstein correction factor `R0`.
pub fn r0(mu0: f64, sigma0_sq: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu0) {
        return Err(Error::Precondition(format!(
            "crossing bound needs observations in [0, 1]; mu0 = {mu0}"
        )));
    }
    if !(sigma0_sq > 0.0) || !(delta > 0.0) {
        return Err(param("sigma0_sq and delta must be positive"));
    }
    Ok(sigma0_sq / (sigma0_sq + delta * mu0.max(1.0 - mu0) / 3.0))
}

/// Which expression of the crossing bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    Bessel,
    Asymptotic,
}

/// A crossing-bound value. `raw` may exceed one for small `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingBound {
    pub ln_value: f64,
    pub raw: f64,
    pub clamped: f64,
}

impl CrossingBound {
    fn from_ln(ln_value: f64) -> Self {
        let raw = ln_value.exp();
        Self {
            ln_value,
            raw,
            clamped: raw.clamp(0.0, 1.0),
        }
    }
}

/// Upper bound on `P0{S_tau' >= b}`.
pub fn crossing_bound(
    b: f64,
    mu0: f64,
    sigma0_sq: f64,
    delta: f64,
    form: BoundForm,
) -> Result<CrossingBound> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(param(format!("b must be positive, got {b}")));
    }
    let r = r0(mu0, sigma0_sq, delta)?;
    let ln_value = match form {
        BoundForm::Bessel => {
            let z = r * r * b * delta / sigma0_sq;
            (2.0 * r * b / delta).ln() + ln_bessel_k1(z)? - z
        }
        BoundForm::Asymptotic => ln_asymptotic_bound(b, sigma0_sq, delta, r),
    };
    Ok(CrossingBound::from_ln(ln_value))
}

fn ln_asymptotic_bound(b: f64, sigma0_sq: f64, delta: f64, r0: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * sigma0_sq * b / delta.powi(3)).ln()
        - 2.0 * r0 * r0 * delta * b / sigma0_sq
}

/// How `b_tilde_prime` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    /// Root of `asymptotic bound(b) = alpha`.
    ExactSolve,
    /// `b_tilde / R0^2`.
    AsymptoticRatio,
}

/// Threshold-design bundle for the MCT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctDesign {
    pub alpha: f64,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub eta: f64,
    pub delta: f64,
    pub r0: f64,
    pub b_tilde: f64,
    pub b_tilde_prime: f64,
    /// `b_tilde / R0^2`, reported whatever the method.
    pub asymptotic_ratio: f64,
    pub method: ThresholdMethod,
    /// `|bound(b_tilde_prime) / alpha - 1|`.
    pub relative_residual: f64,
}

impl MctDesign {
    /// Relative residual of the defining equation at `b`.
    pub fn residual_at(&self, b: f64) -> f64 {
        let g = ln_asymptotic_bound(b, self.sigma0_sq, self.delta, self.r0) - self.alpha.ln();
        g.exp_m1().abs()
    }
}

/// Corrected MCT threshold: solves `sqrt(2 pi sigma0^2 b / Delta^3)
/// exp(-2 R0^2 Delta b / sigma0^2) = alpha` by bisection on the log-residual
/// over `[b_tilde, 20 b_tilde / R0^2]`.
pub fn mct_threshold_exact(alpha: f64, mu0: f64, sigma0_sq: f64, eta: f64) -> Result<MctDesign> {
    let mut design = mct_design_ratio(alpha, mu0, sigma0_sq, eta)?;
    let g = |b: f64| ln_asymptotic_bound(b, sigma0_sq, design.delta, design.r0) - alpha.ln();

    let mut lo = design.b_tilde;
    let mut hi = BRACKET_FACTOR * design.asymptotic_ratio;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::Solver {
            message: format!("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}"),
            residual: g_lo.abs().min(g_hi.abs()),
        });
    }
    for _ in 0..500 {
        if hi - lo <= SOLVE_TOL * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = if g(lo).abs() < g(hi).abs() { lo } else { hi };
    design.b_tilde_prime = b;
    design.method = ThresholdMethod::ExactSolve;
    design.relative_residual = design.residual_at(b);
    Ok(design)
}

/// Design using `b' = b_tilde / R0^2` without solving.
pub fn mct_design_ratio(alpha: f64, mu0: f64, sigma0_sq: f64, eta: f64) -> Result<MctDesign> {
    let b_tilde = mct_threshold_small_delta(alpha, mu0, sigma0_sq, eta)?;
    let delta = 0.5 * (eta - mu0);
    let r = r0(mu0, sigma0_sq, delta)?;
    let ratio = b_tilde / (r * r);
    let mut design = MctDesign {
        alpha,
        mu0,
        sigma0_sq,
        eta,
        delta,
        r0: r,
        b_tilde,
        b_tilde_prime: ratio,
        asymptotic_ratio: ratio,
        method: ThresholdMethod::AsymptoticRatio,
        relative_residual: 0.0,
    };
    design.relative_residual = design.residual_at(ratio);
    Ok(design)
}

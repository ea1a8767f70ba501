//! Least-favorable post-change law by exponential tilting.
//!
//! Among all laws with mean at least `eta`, the one closest to the pre-change
//! law `P0` in KL divergence is the tilted density
//! `p0(x) exp(lambda* x - kappa0(lambda*))`, where `kappa0'(lambda*) = eta`.
//! Its log-likelihood ratio against `P0` is affine in `x`, which is what the
//! tilted CuSum accumulates.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, Law};
use crate::error::{param, Error, Result};

/// Upper cap for the bracket-doubling search.
const LAMBDA_CAP: f64 = (1u64 << 60) as f64;
const LAMBDA_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
/// Beta targets must satisfy `eta <= 1 - BETA_EDGE`.
const BETA_EDGE: f64 = 1e-6;
const WS_SLACK_TOL: f64 = -1e-9;

/// Tilted model `P~1` of a base law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedModel {
    pub lambda_star: f64,
    pub kappa_at_lambda_star: f64,
    pub eta: f64,
    /// `KL(P~1 || P0) = lambda* eta - kappa0(lambda*)`.
    pub kl: f64,
    pub base: DistributionSpec,
}

impl TiltedModel {
    /// Log-likelihood ratio `ln(p~1(x) / p0(x))`.
    #[inline]
    pub fn log_lr(&self, x: f64) -> f64 {
        self.lambda_star * x - self.kappa_at_lambda_star
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        Ok(self.base.ln_pdf(x)? + self.log_lr(x))
    }

    /// The tilted law as a [`DistributionSpec`], when it stays in the family:
    /// a Gaussian shifts its mean, a grid reweights its points. Beta tilts
    /// leave the Beta family and return `None`.
    pub fn as_spec(&self) -> Option<DistributionSpec> {
        match self.base.law() {
            Law::Gaussian { mu, sigma2 } => {
                DistributionSpec::gaussian(mu + sigma2 * self.lambda_star, *sigma2).ok()
            }
            Law::EmpiricalGrid { points, weights } => {
                let w = points
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * self.log_lr(*x).exp())
                    .collect();
                DistributionSpec::empirical_grid(points.clone(), w).ok()
            }
            Law::Beta { .. } => None,
        }
    }
}

/// Outcome of a numeric weak-stochastic-boundedness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsBoundednessReport {
    /// Minimum over candidates of `KL(P1||P0) - KL(P1||P~1) - KL(P~1||P0)`.
    /// `+inf` when no candidate was supplied.
    pub kl_slack: f64,
    /// `1 - E_P0[p~1/p0]`.
    pub exp_slack: f64,
    pub pass: bool,
}

/// Solves `kappa0'(lambda) = eta` for the tilt parameter.
///
/// The derivative is nondecreasing, so the root is bracketed by doubling
/// `lambda_hi` from 1, located by bisection and finished with guarded Newton
/// steps.
pub fn solve_lambda_star(base: &DistributionSpec, eta: f64) -> Result<TiltedModel> {
    if !eta.is_finite() {
        return Err(param("eta must be finite"));
    }
    let mean = base.mean();
    if eta <= mean {
        return Err(Error::NoMeanIncrease { eta, mean });
    }
    let (_, sup) = base.support();
    let feasible = match base.law() {
        Law::Beta { .. } => eta <= 1.0 - BETA_EDGE,
        Law::Gaussian { .. } => true,
        Law::EmpiricalGrid { .. } => eta < sup,
    };
    if !feasible {
        return Err(Error::InfeasibleTilt { eta, sup });
    }

    let residual = |l: f64| base.cgf(l).kappa_prime - eta;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while residual(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_CAP {
            return Err(Error::Solver {
                message: format!("no bracket for eta = {eta} below lambda = 2^60"),
                residual: residual(lo),
            });
        }
    }
    debug_assert!(residual(lo) <= 0.0 && residual(hi) > 0.0);

    for _ in 0..400 {
        if hi - lo <= LAMBDA_TOL * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..4 {
        let c = base.cgf(lambda);
        let r = c.kappa_prime - eta;
        if r.abs() < 1e-14 || c.kappa_second <= 0.0 {
            break;
        }
        let next = lambda - r / c.kappa_second;
        if !(next > lo - LAMBDA_TOL && next < hi + LAMBDA_TOL) {
            break;
        }
        lambda = next;
    }

    let c = base.cgf(lambda);
    let r = c.kappa_prime - eta;
    if r.abs() >= RESIDUAL_TOL {
        return Err(Error::Solver {
            message: format!("lambda* did not converge for eta = {eta}"),
            residual: r,
        });
    }
    let kl = lambda * eta - c.kappa;
    Ok(TiltedModel {
        lambda_star: lambda,
        kappa_at_lambda_star: c.kappa,
        eta,
        kl: kl.max(0.0),
        base: base.clone(),
    })
}

/// Density (or grid mass) of the tilted law.
pub fn tilted_pdf(model: &TiltedModel, x: f64) -> Result<f64> {
    model.ln_pdf(x).map(f64::exp)
}

/// `KL(P~1 || P0) = lambda* eta - kappa0(lambda*)`.
pub fn kl_tilted(model: &TiltedModel) -> f64 {
    model.kl
}

/// Small-gap approximations `(2 Delta / sigma^2, 2 Delta^2 / sigma^2)` with
/// `Delta = (eta - mu0) / 2`.
pub fn small_delta_approximations(mu0: f64, sigma2: f64, eta: f64) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) {
        return Err(param("sigma2 must be positive"));
    }
    if eta < mu0 {
        return Err(Error::NoMeanIncrease { eta, mean: mu0 });
    }
    let delta = 0.5 * (eta - mu0);
    Ok((2.0 * delta / sigma2, 2.0 * delta * delta / sigma2))
}

fn same_measure(a: &DistributionSpec, b: &DistributionSpec) -> Result<()> {
    if a.is_discrete() != b.is_discrete() {
        return Err(Error::Precondition(
            "candidate and base must both be continuous or both discrete".into(),
        ));
    }
    Ok(())
}

/// `E_P1[ln p1 - ln p0 - (lambda x - kappa)]`-style differences by the
/// candidate's integration nodes; fails if `P1` is not absolutely continuous
/// with respect to the base.
fn candidate_kl<F: Fn(f64) -> Result<f64>>(p1: &DistributionSpec, ln_q: F) -> Result<f64> {
    let mut acc = 0.0;
    for (x, lm) in p1.log_masses() {
        let m = lm.exp();
        if m == 0.0 {
            continue;
        }
        let lq = ln_q(x)?;
        if !lq.is_finite() {
            return Err(Error::Precondition(format!(
                "candidate puts mass at {x} where the reference has none"
            )));
        }
        acc += m * (p1.ln_pdf(x)? - lq);
    }
    Ok(acc)
}

/// Numerically checks the two weak-stochastic-boundedness conditions for the
/// pair `(P0, P~1)`: the KL inequality for each candidate `P1` (each must have
/// mean at least `eta`) and `E_P0[L] = 1` for the likelihood ratio
/// `L = p~1 / p0`. Only the supplied candidates are checked.
pub fn check_ws_bounded(
    base: &DistributionSpec,
    model: &TiltedModel,
    candidates: &[DistributionSpec],
) -> Result<WsBoundednessReport> {
    for c in candidates {
        if c.mean() + 1e-12 < model.eta {
            return Err(Error::Precondition(format!(
                "candidate mean {} is below eta = {}",
                c.mean(),
                model.eta
            )));
        }
        same_measure(c, base)?;
    }

    let exp_slack = 1.0 - base.expectation(|x| model.log_lr(x).exp());

    // KL(P~1 || P0) by quadrature of the tilted density.
    let lhs: f64 = base
        .log_masses()
        .into_iter()
        .map(|(x, lm)| {
            let llr = model.log_lr(x);
            (lm + llr).exp() * llr
        })
        .sum();

    let mut kl_slack = f64::INFINITY;
    for c in candidates {
        let to_base = candidate_kl(c, |x| base.ln_pdf(x))?;
        let to_tilted = candidate_kl(c, |x| model.ln_pdf(x))?;
        kl_slack = kl_slack.min(to_base - to_tilted - lhs);
    }

    Ok(WsBoundednessReport {
        kl_slack,
        exp_slack,
        pass: kl_slack >= WS_SLACK_TOL && exp_slack >= WS_SLACK_TOL,
    })
}

//! Observation laws and seeded observation sources.
//!
//! A [`DistributionSpec`] is a validated Beta, Gaussian or empirical-grid law.
//! Expectations over a law (and therefore its cumulant-generating function)
//! go through a fixed set of weighted nodes: the 256-node Gauss-Legendre rule
//! on `[0, 1]` for Beta, the same rule on `mu +- 12 sigma` for Gaussian, and
//! the grid points themselves for an empirical grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{param, Error, Result};
use crate::quadrature::{log_sum_exp, unit_rule};
use crate::rng::{CounterRng, Domain};

/// Half-width, in standard deviations, of the Gaussian integration window.
const GAUSS_WINDOW: f64 = 12.0;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Raw, unvalidated description of a law. This is the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Beta { a: f64, b: f64 },
    Gaussian { mu: f64, sigma2: f64 },
    EmpiricalGrid { points: Vec<f64>, weights: Vec<f64> },
}

/// A validated observation law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Law", into = "Law")]
pub struct DistributionSpec {
    law: Law,
    /// Log of the density normalizer: `ln B(a, b)` or `ln sqrt(2 pi sigma2)`.
    ln_norm: f64,
}

/// Cumulant-generating function value and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cgf {
    pub kappa: f64,
    pub kappa_prime: f64,
    pub kappa_second: f64,
}

impl TryFrom<Law> for DistributionSpec {
    type Error = Error;

    fn try_from(law: Law) -> Result<Self> {
        match law {
            Law::Beta { a, b } => Self::beta(a, b),
            Law::Gaussian { mu, sigma2 } => Self::gaussian(mu, sigma2),
            Law::EmpiricalGrid { points, weights } => Self::empirical_grid(points, weights),
        }
    }
}

impl From<DistributionSpec> for Law {
    fn from(spec: DistributionSpec) -> Self {
        spec.law
    }
}

fn xlny(c: f64, y: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * y.ln()
    }
}

/// Beta nodes when an exponent is below one. Each half of `[0, 1]` is mapped
/// by `x = y^(1/a)` (resp. `1 - x = y^(1/b)`), which cancels the endpoint
/// singularity of the density.
fn singular_beta_masses(a: f64, b: f64, ln_norm: f64) -> Vec<(f64, f64)> {
    let half = |shape: f64, other: f64, mirror: bool| {
        let p = if shape < 1.0 { 1.0 / shape } else { 1.0 };
        let top = 0.5f64.powf(1.0 / p);
        unit_rule().on_interval(0.0, top).map(move |(y, w)| {
            let near = y.powf(p);
            let ln_mass =
                w.ln() + p.ln() + (p * shape - 1.0) * y.ln() + (other - 1.0) * (-near).ln_1p()
                    - ln_norm;
            (if mirror { 1.0 - near } else { near }, ln_mass)
        })
    };
    half(a, b, false).chain(half(b, a, true)).collect()
}

impl DistributionSpec {
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
            return Err(param(format!(
                "Beta parameters must be positive, got ({a}, {b})"
            )));
        }
        Ok(Self {
            law: Law::Beta { a, b },
            ln_norm: ln_beta(a, b),
        })
    }

    pub fn gaussian(mu: f64, sigma2: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma2.is_finite() && sigma2 > 0.0) {
            return Err(param(format!(
                "Gaussian needs finite mean and positive variance, got ({mu}, {sigma2})"
            )));
        }
        Ok(Self {
            law: Law::Gaussian { mu, sigma2 },
            ln_norm: 0.5 * (2.0 * PI * sigma2).ln(),
        })
    }

    /// Discrete law on `points`; `weights` are renormalized to sum to one.
    pub fn empirical_grid(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(param(
                "grid needs equally many points and weights, at least one",
            ));
        }
        if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(param("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("grid points must be strictly ascending"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(param("grid weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(param("grid weights sum to zero"));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < WEIGHT_SUM_TOL);
        let spec = Self {
            law: Law::EmpiricalGrid { points, weights },
            ln_norm: 0.0,
        };
        if spec.variance() <= 0.0 {
            return Err(param("grid law is degenerate (zero variance)"));
        }
        Ok(spec)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.law, Law::EmpiricalGrid { .. })
    }

    pub fn mean(&self) -> f64 {
        match &self.law {
            Law::Beta { a, b } => a / (a + b),
            Law::Gaussian { mu, .. } => *mu,
            Law::EmpiricalGrid { points, weights } => {
                points.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.law {
            Law::Beta { a, b } => {
                let s = a + b;
                a * b / (s * s * (s + 1.0))
            }
            Law::Gaussian { sigma2, .. } => *sigma2,
            Law::EmpiricalGrid { points, weights } => {
                let m = self.mean();
                points
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * (x - m) * (x - m))
                    .sum()
            }
        }
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean(), self.variance())
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match &self.law {
            Law::Beta { .. } => (0.0, 1.0),
            Law::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Law::EmpiricalGrid { points, weights } => {
                let lo = points.iter().zip(weights).find(|(_, w)| **w > 0.0);
                let hi = points.iter().zip(weights).rev().find(|(_, w)| **w > 0.0);
                (*lo.unwrap().0, *hi.unwrap().0)
            }
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let ok = match &self.law {
            Law::Gaussian { .. } => x.is_finite(),
            _ => (0.0..=1.0).contains(&x),
        };
        if ok {
            Ok(())
        } else {
            let (lo, hi) = match self.law {
                Law::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
                _ => (0.0, 1.0),
            };
            Err(Error::Domain { value: x, lo, hi })
        }
    }

    /// Log density (or log probability mass for a grid).
    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match &self.law {
            Law::Beta { a, b } => xlny(a - 1.0, x) + xlny(b - 1.0, 1.0 - x) - self.ln_norm,
            Law::Gaussian { mu, sigma2 } => -0.5 * (x - mu) * (x - mu) / sigma2 - self.ln_norm,
            Law::EmpiricalGrid { points, weights } => {
                match points.binary_search_by(|p| p.total_cmp(&x)) {
                    Ok(i) => weights[i].ln(),
                    Err(_) => f64::NEG_INFINITY,
                }
            }
        })
    }

    /// Density for continuous laws, probability mass on grid points for a grid.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.ln_pdf(x).map(f64::exp)
    }

    /// Integration nodes as `(x, ln mass)`, where `sum(exp(ln mass) * f(x))`
    /// approximates `E[f(X)]`.
    pub fn log_masses(&self) -> Vec<(f64, f64)> {
        match &self.law {
            Law::Beta { a, b } if *a >= 1.0 && *b >= 1.0 => unit_rule()
                .on_interval(0.0, 1.0)
                .map(|(x, w)| (x, w.ln() + self.ln_pdf(x).expect("node inside support")))
                .collect(),
            Law::Beta { a, b } => singular_beta_masses(*a, *b, self.ln_norm),
            Law::Gaussian { mu, sigma2 } => {
                let s = sigma2.sqrt();
                unit_rule()
                    .on_interval(mu - GAUSS_WINDOW * s, mu + GAUSS_WINDOW * s)
                    .map(|(x, w)| {
                        (
                            x,
                            w.ln() - 0.5 * (x - mu) * (x - mu) / sigma2 - self.ln_norm,
                        )
                    })
                    .collect()
            }
            Law::EmpiricalGrid { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(&x, &w)| (x, w.ln()))
                .collect(),
        }
    }

    /// `E[f(X)]` by the law's integration nodes.
    pub fn expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.log_masses()
            .into_iter()
            .map(|(x, lm)| lm.exp() * f(x))
            .sum()
    }

    /// `kappa(lambda) = ln E[exp(lambda X)]` with first and second derivative.
    ///
    /// Gaussian is closed form. Otherwise the sum runs in the log domain and
    /// is divided by the node total mass, so `kappa(0) = 0` holds to rounding.
    pub fn cgf(&self, lambda: f64) -> Cgf {
        if let Law::Gaussian { mu, sigma2 } = self.law {
            return Cgf {
                kappa: mu * lambda + 0.5 * sigma2 * lambda * lambda,
                kappa_prime: mu + sigma2 * lambda,
                kappa_second: sigma2,
            };
        }
        let masses = self.log_masses();
        let ln_total = log_sum_exp(masses.iter().map(|(_, lm)| *lm));
        let tilted: Vec<f64> = masses.iter().map(|(x, lm)| lm + lambda * x).collect();
        let ln_z = log_sum_exp(tilted.iter().copied());
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for ((x, _), lt) in masses.iter().zip(&tilted) {
            let p = (lt - ln_z).exp();
            m1 += p * x;
            m2 += p * x * x;
        }
        Cgf {
            kappa: ln_z - ln_total,
            kappa_prime: m1,
            kappa_second: (m2 - m1 * m1).max(0.0),
        }
    }

    pub(crate) fn sampler(&self) -> Sampler {
        match &self.law {
            Law::Beta { a, b } => Sampler::Beta(rand_distr::Beta::new(*a, *b).expect("validated")),
            Law::Gaussian { mu, sigma2 } => {
                Sampler::Normal(Normal::new(*mu, sigma2.sqrt()).expect("validated"))
            }
            Law::EmpiricalGrid { points, weights } => {
                let mut acc = 0.0;
                let cdf = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Sampler::Grid {
                    points: points.clone(),
                    cdf,
                }
            }
        }
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().draw(rng)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Sampler {
    Beta(rand_distr::Beta<f64>),
    Normal(Normal<f64>),
    Grid { points: Vec<f64>, cdf: Vec<f64> },
}

impl Sampler {
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Grid { points, cdf } => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|c| *c <= u).min(points.len() - 1);
                points[i]
            }
        }
    }
}

/// How post-change laws are chosen at each time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PostChangeGenerator {
    /// The same law at every step.
    Stationary { law: DistributionSpec },
    /// `Beta(A, b)` with `A ~ Unif(a_low, a_high)` drawn afresh at every step.
    RandomParamBeta { a_low: f64, a_high: f64, b: f64 },
}

impl PostChangeGenerator {
    pub fn stationary(law: DistributionSpec) -> Self {
        Self::Stationary { law }
    }

    pub fn random_param_beta(a_low: f64, a_high: f64, b: f64) -> Result<Self> {
        let g = Self::RandomParamBeta { a_low, a_high, b };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Stationary { .. } => Ok(()),
            Self::RandomParamBeta { a_low, a_high, b } => {
                if a_low > 0.0 && a_high >= a_low && a_high.is_finite() && b > 0.0 && b.is_finite()
                {
                    Ok(())
                } else {
                    Err(param(format!(
                        "random Beta generator needs 0 < a_low <= a_high and b > 0, got ({a_low}, {a_high}, {b})"
                    )))
                }
            }
        }
    }

    /// Smallest mean any per-step law can have.
    pub fn min_mean(&self) -> f64 {
        match self {
            Self::Stationary { law } => law.mean(),
            // a / (a + b) is increasing in a
            Self::RandomParamBeta { a_low, b, .. } => a_low / (a_low + b),
        }
    }

    /// Checks that every per-step law has mean at least `eta`.
    pub fn check_min_mean(&self, eta: f64) -> Result<()> {
        let m = self.min_mean();
        if m + 1e-12 < eta {
            return Err(Error::Precondition(format!(
                "post-change law has mean {m} below eta = {eta}"
            )));
        }
        Ok(())
    }

    fn sampler(&self) -> PostSampler {
        match self {
            Self::Stationary { law } => PostSampler::Stationary(law.sampler()),
            Self::RandomParamBeta { a_low, a_high, b } => PostSampler::RandomParamBeta {
                a_low: *a_low,
                a_high: *a_high,
                b: *b,
            },
        }
    }
}

#[derive(Debug, Clone)]
enum PostSampler {
    Stationary(Sampler),
    RandomParamBeta { a_low: f64, a_high: f64, b: f64 },
}

/// When the change happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangePoint {
    /// Observations at `t >= nu` follow the post-change generator.
    At(u64),
    Never,
}

#[derive(Debug)]
struct Laws {
    pre: DistributionSpec,
    post: PostChangeGenerator,
    pre_sampler: Sampler,
    post_sampler: PostSampler,
}

/// A reproducible observation sequence: `X_t` is a pure function of
/// `(seed, stream_id, t)`.
#[derive(Debug, Clone)]
pub struct ObservationSource {
    laws: Arc<Laws>,
    change_point: ChangePoint,
    seed: u64,
    stream_id: u64,
}

impl ObservationSource {
    pub fn new(
        pre: DistributionSpec,
        post: PostChangeGenerator,
        change_point: ChangePoint,
        seed: u64,
    ) -> Result<Self> {
        post.validate()?;
        if change_point == ChangePoint::At(0) {
            return Err(param("change point must be at least 1"));
        }
        let laws = Laws {
            pre_sampler: pre.sampler(),
            post_sampler: post.sampler(),
            pre,
            post,
        };
        Ok(Self {
            laws: Arc::new(laws),
            change_point,
            seed,
            stream_id: 0,
        })
    }

    /// Same laws and seed on another substream. Cheap.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            stream_id,
            ..self.clone()
        }
    }

    pub fn with_change_point(&self, change_point: ChangePoint) -> Self {
        Self {
            change_point,
            ..self.clone()
        }
    }

    pub fn pre(&self) -> &DistributionSpec {
        &self.laws.pre
    }

    pub fn post(&self) -> &PostChangeGenerator {
        &self.laws.post
    }

    pub fn change_point(&self) -> ChangePoint {
        self.change_point
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    fn is_post(&self, t: u64) -> bool {
        match self.change_point {
            ChangePoint::At(nu) => t >= nu,
            ChangePoint::Never => false,
        }
    }

    fn param_a(&self, t: u64, a_low: f64, a_high: f64) -> f64 {
        if a_high > a_low {
            CounterRng::new(self.seed, self.stream_id, t, Domain::Parameter)
                .random_range(a_low..a_high)
        } else {
            a_low
        }
    }

    /// The law observation `t` is drawn from.
    pub fn law_at(&self, t: u64) -> DistributionSpec {
        if !self.is_post(t) {
            return self.laws.pre.clone();
        }
        match &self.laws.post {
            PostChangeGenerator::Stationary { law } => law.clone(),
            PostChangeGenerator::RandomParamBeta { a_low, a_high, b } => {
                DistributionSpec::beta(self.param_a(t, *a_low, *a_high), *b).expect("validated")
            }
        }
    }

    /// Observation at time `t >= 1`.
    pub fn sample(&self, t: u64) -> f64 {
        assert!(t >= 1, "time index starts at 1");
        let mut rng = CounterRng::new(self.seed, self.stream_id, t, Domain::Observation);
        if !self.is_post(t) {
            return self.laws.pre_sampler.draw(&mut rng);
        }
        match &self.laws.post_sampler {
            PostSampler::Stationary(s) => s.draw(&mut rng),
            PostSampler::RandomParamBeta { a_low, a_high, b } => {
                let a = self.param_a(t, *a_low, *a_high);
                rand_distr::Beta::new(a, *b)
                    .expect("validated")
                    .sample(&mut rng)
            }
        }
    }
}

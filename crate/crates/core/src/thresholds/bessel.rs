//! Modified Bessel function of the second kind, order one.
//!
//! `z < 2` uses the ascending series around `I_1(z) ln(z/2)`. `z >= 2` uses
//! Steed's continued fraction for `K_0` and `K_1` (Temme's CF2), evaluated
//! for the scaled value `e^z K_1(z)` so large arguments never underflow.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 2.0;
const EPS: f64 = 1e-17;
const MAX_ITER: usize = 10_000;

fn check(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            value: z,
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

fn k1_series(z: f64) -> f64 {
    let y = 0.25 * z * z;
    // term_k = (z^2/4)^k / (k! (k+1)!)
    let mut term = 1.0;
    let mut i1 = 0.0;
    let mut psi_sum = 0.0;
    let mut h_k = 0.0; // harmonic number H_k
    for k in 0..200 {
        let kf = k as f64;
        if k > 0 {
            term *= y / (kf * (kf + 1.0));
            h_k += 1.0 / kf;
        }
        let h_k1 = h_k + 1.0 / (kf + 1.0);
        // psi(k+1) + psi(k+2) = -2 gamma + H_k + H_{k+1}
        let psi = -2.0 * EULER_GAMMA + h_k + h_k1;
        i1 += term;
        psi_sum += psi * term;
        if term < EPS * i1.abs() && k > 2 {
            break;
        }
    }
    let i1 = 0.5 * z * i1;
    1.0 / z + (0.5 * z).ln() * i1 - 0.25 * z * psi_sum
}

/// `e^z K_1(z)` by the continued fraction, valid for `z >= 2`.
fn k1_scaled_cf(z: f64) -> f64 {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k0_scaled = (PI / (2.0 * z)).sqrt() / s;
    k0_scaled * (z + 0.5 - h) / z
}

/// `K_1(z)` for `z > 0`. Underflows to zero past `z ~ 705`; use
/// [`ln_bessel_k1`] there.
pub fn bessel_k1(z: f64) -> Result<f64> {
    check(z)?;
    if z < SERIES_LIMIT {
        Ok(k1_series(z))
    } else {
        Ok(k1_scaled_cf(z) * (-z).exp())
    }
}

/// `e^z K_1(z)`.
pub fn bessel_k1_scaled(z: f64) -> Result<f64> {
    check(z)?;
    if z < SERIES_LIMIT {
        Ok(k1_series(z) * z.exp())
    } else {
        Ok(k1_scaled_cf(z))
    }
}

/// `ln K_1(z)`, finite for every positive finite `z`.
pub fn ln_bessel_k1(z: f64) -> Result<f64> {
    check(z)?;
    if z < SERIES_LIMIT {
        Ok(k1_series(z).ln())
    } else {
        Ok(k1_scaled_cf(z).ln() - z)
    }
}

//! Airy function `Ai` and its derivative for large positive arguments.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Smallest argument for which the asymptotic series reaches ~1e-13
/// relative accuracy (its optimal truncation error is about `e^{-2ζ}`).
pub const ASYMPTOTIC_MIN_X: f64 = 8.0;

/// `(Ai(x), Ai'(x))` from the large-`x` asymptotic series
///
/// ```text
/// Ai(x)  ~  e^{-ζ} / (2√π x^{1/4}) Σ (-1)^k u_k ζ^{-k}
/// Ai'(x) ~ -x^{1/4} e^{-ζ} / (2√π) Σ (-1)^k v_k ζ^{-k},   ζ = 2x^{3/2}/3,
/// ```
///
/// each truncated at its smallest term.
pub fn airy_ai_asymptotic(x: f64) -> Result<(f64, f64)> {
    if !(x >= ASYMPTOTIC_MIN_X) {
        return Err(Error::OutOfRange {
            what: "Airy asymptotic argument",
            value: x,
            range: format!("[{ASYMPTOTIC_MIN_X}, inf)"),
        });
    }
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let prefactor = (-zeta).exp() / (2.0 * PI.sqrt());

    let mut sum_u = 1.0;
    let mut sum_v = 1.0;
    let mut u = 1.0;
    let mut last_u = f64::INFINITY;
    let mut last_v = f64::INFINITY;
    let mut u_done = false;
    let mut v_done = false;
    for k in 1..200 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / (216.0 * kf * (2.0 * kf - 1.0));
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let zk = zeta.powi(k);
        let tu = u / zk;
        let tv = v.abs() / zk;
        if !u_done {
            if tu >= last_u {
                u_done = true;
            } else {
                sum_u += sign * tu;
                last_u = tu;
            }
        }
        if !v_done {
            if tv >= last_v {
                v_done = true;
            } else {
                sum_v += sign * v / zk;
                last_v = tv;
            }
        }
        if (u_done || last_u < 1e-17) && (v_done || last_v < 1e-17) {
            break;
        }
    }
    let ai = prefactor / x.powf(0.25) * sum_u;
    let aip = -prefactor * x.powf(0.25) * sum_v;
    Ok((ai, aip))
}

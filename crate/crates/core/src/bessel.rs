//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Both come from the ascending series `Σ (x/2)^(2m+ν) / (m!(m+ν)!)`. All
//! terms are positive, so the sum carries no cancellation error at any `x`;
//! partial sums are rescaled to keep large arguments from overflowing before
//! the ratio or logarithm is taken.

use crate::error::{Error, Result};

const RESCALE_ABOVE: f64 = 1e280;
const RESCALE_BY: f64 = 1e-280;

/// Scaled partial sums `(I₀(x), I₁(x)) · 10^(−280·rescales)`.
struct Series {
    i0: f64,
    i1: f64,
    rescales: i32,
}

fn series(x: f64) -> Series {
    let half = 0.5 * x;
    let quarter_sq = half * half;
    // term_m = (x/2)^(2m)/(m!)²; the order-1 term is term_m·(x/2)/(m+1)
    let mut term = 1.0;
    let mut i0 = 1.0;
    let mut i1 = half;
    let mut rescales = 0;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= quarter_sq / (m * m);
        let t1 = term * half / (m + 1.0);
        i0 += term;
        i1 += t1;
        if term < i0 * 1e-17 && t1 < i1 * 1e-17 && m > half {
            break;
        }
        if i0 > RESCALE_ABOVE {
            i0 *= RESCALE_BY;
            i1 *= RESCALE_BY;
            term *= RESCALE_BY;
            rescales += 1;
        }
    }
    Series { i0, i1, rescales }
}

/// `I₀(x)`. Even in `x`; overflows to a range error above x ≈ 713.98.
pub fn bessel_i0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("bessel_i0 of NaN".into()));
    }
    let x = x.abs();
    if x == 0.0 {
        return Ok(1.0);
    }
    let s = series(x);
    let value = s.i0 * 10f64.powi(280 * s.rescales);
    if !value.is_finite() {
        return Err(Error::Range(format!("I0({x}) overflows f64")));
    }
    Ok(value)
}

/// `ln I₀(x)`, finite for every finite `x`.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    let s = series(x);
    s.i0.ln() + 280.0 * s.rescales as f64 * std::f64::consts::LN_10
}

/// `I₁(x)/I₀(x)`, the mean resultant length of a von Mises law with
/// concentration `x`. Odd in `x`.
pub fn bessel_ratio_i1_i0(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let s = series(x.abs());
    (s.i1 / s.i0).copysign(x)
}

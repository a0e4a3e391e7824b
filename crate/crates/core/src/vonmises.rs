//! Von Mises law of the wrapped phase increments.
//!
//! With concentration `κ = τ̄/t` the density on (−π, π] is
//! `exp(κ cos θ) / (2π I₀(κ))`. Discretizing into `2^k` equal bins gives
//! probabilities `p_i` whose largest deviation from `2^−k` measures how far
//! the extracted symbols are from uniform.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_ratio_i1_i0, ln_bessel_i0};
use crate::error::{domain, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::series::wrap_angle;

/// Per-bin absolute quadrature tolerance, split further across bins so the
/// total stays well inside 1e-10.
const BIN_TOLERANCE: f64 = 1e-12;

/// Mean resultant lengths at or above this are treated as a point mass.
const DEGENERATE_RESULTANT: f64 = 1.0 - 1e-12;

const FIT_TOLERANCE: f64 = 1e-9;
const FIT_BRACKET: f64 = 1000.0;

pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VonMisesModel {
    kappa: f64,
    mu: f64,
    #[serde(skip)]
    ln_norm: f64,
}

impl VonMisesModel {
    /// Model centered at zero.
    pub fn new(kappa: f64) -> Result<Self> {
        Self::with_location(kappa, 0.0)
    }

    pub fn with_location(kappa: f64, mu: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(domain(format!(
                "kappa must be finite and >= 0, got {kappa}"
            )));
        }
        if !mu.is_finite() {
            return Err(domain("location must be finite"));
        }
        Ok(Self {
            kappa,
            mu: wrap_angle(mu),
            ln_norm: TAU.ln() + ln_bessel_i0(kappa),
        })
    }

    /// Model for the variance parameter `t/τ̄` (κ is its inverse).
    pub fn from_variance_parameter(t_over_tau: f64) -> Result<Self> {
        if t_over_tau.is_nan() || t_over_tau <= 0.0 {
            return Err(domain(format!("t/tau must be positive, got {t_over_tau}")));
        }
        Self::new(1.0 / t_over_tau)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `1/κ`; infinite for the uniform law.
    pub fn variance_parameter(&self) -> f64 {
        1.0 / self.kappa
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        (self.kappa * (theta - self.mu).cos() - self.ln_norm).exp()
    }

    /// `I₁(κ)/I₀(κ)`.
    pub fn mean_resultant_length(&self) -> f64 {
        bessel_ratio_i1_i0(self.kappa)
    }
}

/// `∫ pdf` over each of the `2^k` bins `(−π + iδ, −π + (i+1)δ]`.
pub fn discretized_probs(model: &VonMisesModel, k: u8) -> Result<Vec<f64>> {
    if !(1..=16).contains(&k) {
        return Err(domain(format!("bit depth must be 1..=16, got {k}")));
    }
    let bins = 1usize << k;
    if model.kappa == 0.0 {
        return Ok(vec![1.0 / bins as f64; bins]);
    }
    let delta = TAU / bins as f64;
    let tol = BIN_TOLERANCE / bins as f64;
    Ok((0..bins)
        .map(|i| {
            let a = -PI + i as f64 * delta;
            adaptive_simpson(|t| model.pdf(t), a, a + delta, tol)
        })
        .collect())
}

/// `max_i |p_i − 2^−k|`.
pub fn max_uniform_deviation(model: &VonMisesModel, k: u8) -> Result<f64> {
    let probs = discretized_probs(model, k)?;
    let uniform = 1.0 / probs.len() as f64;
    Ok(probs
        .iter()
        .map(|p| (p - uniform).abs())
        .fold(0.0, f64::max))
}

/// Maximum-likelihood von Mises fit with its diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VonMisesFit {
    pub model: VonMisesModel,
    pub n: usize,
    /// `|Σ e^{iθ}| / N`.
    pub mean_resultant_length: f64,
    pub mean_direction: f64,
    /// Fitted `t/τ̄ = 1/κ̂`.
    pub variance_parameter: f64,
    /// Asymptotic standard error of κ̂, `1/√(N·A'(κ̂))`.
    pub kappa_std_error: f64,
    /// Log-likelihood per sample at the fitted parameters.
    pub mean_log_likelihood: f64,
}

/// Solves `I₁(κ)/I₀(κ) = R̄` by bisection.
pub fn fit_vonmises(samples: &[f64]) -> Result<VonMisesFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    let (mut c, mut s) = (0.0, 0.0);
    for (n, &theta) in samples.iter().enumerate() {
        if !(theta > -PI && theta <= PI) {
            return Err(domain(format!("sample {n} ({theta}) is outside (-pi, pi]")));
        }
        let (sin, cos) = theta.sin_cos();
        c += cos;
        s += sin;
    }
    let n = samples.len() as f64;
    let r_bar = (c * c + s * s).sqrt() / n;
    if r_bar >= DEGENERATE_RESULTANT {
        return Err(Error::UnboundedConcentration(r_bar));
    }
    let kappa = invert_resultant(r_bar);
    let direction = s.atan2(c);
    let model = VonMisesModel::with_location(kappa, direction)?;
    let a = model.mean_resultant_length();
    let a_prime = if kappa > 0.0 {
        1.0 - a / kappa - a * a
    } else {
        0.5
    };
    Ok(VonMisesFit {
        model,
        n: samples.len(),
        mean_resultant_length: r_bar,
        mean_direction: direction,
        variance_parameter: 1.0 / kappa,
        kappa_std_error: 1.0 / (n * a_prime).sqrt(),
        mean_log_likelihood: kappa * r_bar - model.ln_norm,
    })
}

fn invert_resultant(r_bar: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = FIT_BRACKET;
    while bessel_ratio_i1_i0(hi) < r_bar {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > FIT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if bessel_ratio_i1_i0(mid) < r_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best–Fisher rejection sampler; draws lie in (−π, π].
impl Distribution<f64> for VonMisesModel {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.kappa < 1e-8 {
            let u: f64 = rng.random();
            return wrap_angle(PI - TAU * u);
        }
        let kappa = self.kappa;
        let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
        let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
        let r = (1.0 + rho * rho) / (2.0 * rho);
        loop {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let z = (PI * u1).cos();
            let f = (1.0 + r * z) / (r + z);
            let c = kappa * (r - f);
            if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                let theta = f.clamp(-1.0, 1.0).acos();
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                return wrap_angle(self.mu + sign * theta);
            }
        }
    }
}

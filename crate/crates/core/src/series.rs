//! Sampled phase trajectories and the sample clock they share with traces.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const FEMTOS_PER_SECOND: f64 = 1e15;

/// Wraps an angle into the half-open interval (−π, π].
///
/// Values already in range are returned unchanged, bit for bit.
pub fn wrap_angle(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let mut r = x - TAU * (x / TAU - 0.5).ceil();
    // Rounding in the line above can land a hair outside the interval.
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// Sample interval stored as an integer number of femtoseconds.
///
/// Keeping the clock integral makes trace files and rate bookkeeping exact:
/// 6.4 µs is exactly 6 400 000 000 fs, so 8 bits per sample is exactly
/// 1.25 Mbit/s.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timebase(u64);

impl Timebase {
    pub fn from_femtoseconds(femtos: u64) -> Result<Self> {
        if femtos == 0 {
            return Err(domain("sample interval must be at least 1 fs"));
        }
        Ok(Self(femtos))
    }

    /// Rounds `seconds` to the nearest femtosecond.
    pub fn from_seconds(seconds: f64) -> Result<Self> {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(domain(format!(
                "sample interval must be positive, got {seconds}"
            )));
        }
        let femtos = (seconds * FEMTOS_PER_SECOND).round();
        if femtos < 1.0 || femtos >= u64::MAX as f64 {
            return Err(domain(format!(
                "sample interval {seconds} s is not representable in fs"
            )));
        }
        Ok(Self(femtos as u64))
    }

    pub fn from_sample_rate(hertz: f64) -> Result<Self> {
        if !(hertz.is_finite() && hertz > 0.0) {
            return Err(domain(format!("sample rate must be positive, got {hertz}")));
        }
        Self::from_seconds(1.0 / hertz)
    }

    pub fn femtoseconds(self) -> u64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 as f64 / FEMTOS_PER_SECOND
    }

    pub fn sample_rate(self) -> f64 {
        FEMTOS_PER_SECOND / self.0 as f64
    }

    /// Output rate for `bits` bits per sample. Exact whenever the rate is an
    /// integer number of bits per second.
    pub fn bit_rate(self, bits: u32) -> f64 {
        (bits as f64 * FEMTOS_PER_SECOND) / self.0 as f64
    }
}

/// Uniformly sampled real-valued phase trajectory, in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSeries {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl PhaseSeries {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(domain("phase series must contain at least one sample"));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `n`.
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    /// True when every sample lies in (−π, π].
    pub fn is_wrapped(&self) -> bool {
        self.samples.iter().all(|&x| x > -PI && x <= PI)
    }

    /// Returns the same trajectory with every sample wrapped into (−π, π].
    pub fn wrapped(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| wrap_angle(x)).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }
}

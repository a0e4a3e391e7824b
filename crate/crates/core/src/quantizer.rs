//! Symmetric mid-rise ADC model.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform mid-rise quantizer over [−full_scale, +full_scale] with clipping.
///
/// Codes are signed integers in [−2^(b−1), 2^(b−1) − 1]; code `c` stands
/// for the level `(c + ½)·step`, so zero is never a reconstruction level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    bits: u8,
    full_scale: f64,
}

impl Quantizer {
    pub fn new(bits: u8, full_scale: f64) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(domain(format!("ADC depth must be 1..=16 bits, got {bits}")));
        }
        if !(full_scale.is_finite() && full_scale > 0.0) {
            return Err(domain(format!(
                "full scale must be positive, got {full_scale}"
            )));
        }
        Ok(Self { bits, full_scale })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / self.levels() as f64
    }

    pub fn min_code(&self) -> i16 {
        (-(1i32 << (self.bits - 1))) as i16
    }

    pub fn max_code(&self) -> i16 {
        ((1i32 << (self.bits - 1)) - 1) as i16
    }

    pub fn contains_code(&self, code: i16) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    #[inline]
    pub fn code(&self, x: f64) -> i16 {
        let c = (x / self.step()).floor();
        c.clamp(self.min_code() as f64, self.max_code() as f64) as i16
    }

    #[inline]
    pub fn level(&self, code: i16) -> f64 {
        (code as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level(self.code(x))
    }
}

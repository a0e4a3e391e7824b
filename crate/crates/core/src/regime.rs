//! Advisory check of the sampling regime against the lasers' coherence.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::sim::effective_coherence_time;

/// `t_sample/τ̄` at or above which the output is declared adequately uniform
/// for 8-bit symbols.
pub const UNIFORMITY_RATIO: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub t_sample: f64,
    pub t_det: f64,
    pub tau_bar: f64,
    /// `t_sample / τ̄`.
    pub sample_ratio: f64,
    /// `t_sample/τ̄ ≥ 2`: successive phases have decorrelated enough.
    pub uniformity_met: bool,
    /// `t_det < τ̄`: each detection sees a frozen phase.
    pub detector_met: bool,
}

impl RegimeCheck {
    pub fn all_met(&self) -> bool {
        self.uniformity_met && self.detector_met
    }

    /// Human-readable advisories for unmet conditions.
    pub fn advisories(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.uniformity_met {
            out.push(format!(
                "t_sample/tau_bar = {:.4} < {UNIFORMITY_RATIO}: symbols may be measurably non-uniform",
                self.sample_ratio
            ));
        }
        if !self.detector_met {
            out.push(format!(
                "t_det = {:e} s >= tau_bar = {:e} s: detector integrates over phase changes",
                self.t_det, self.tau_bar
            ));
        }
        out
    }
}

/// Evaluates both conditions. Never blocks processing; callers print the
/// advisories.
pub fn check_regime(t_sample: f64, t_det: f64, tau_c1: f64, tau_c2: f64) -> Result<RegimeCheck> {
    for (name, v) in [("t_sample", t_sample), ("t_det", t_det)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(domain(format!("{name} must be positive, got {v}")));
        }
    }
    let tau_bar = effective_coherence_time(tau_c1, tau_c2)?;
    let sample_ratio = t_sample / tau_bar;
    Ok(RegimeCheck {
        t_sample,
        t_det,
        tau_bar,
        sample_ratio,
        uniformity_met: sample_ratio >= UNIFORMITY_RATIO,
        detector_met: t_det < tau_bar,
    })
}

//! Shared inputs for the criterion benches.

use std::f64::consts::TAU;

use phaseqrng::{simulate_iq_trace, simulate_phase_walk_len, DetectorConfig, IQTrace, LaserPair};

pub const SAMPLE_DT: f64 = 6.4e-6;

/// Lasers decorrelating fully between samples (`dt/τ̄ = 50`).
pub fn pair() -> LaserPair {
    LaserPair::symmetric(4.0 * SAMPLE_DT / 50.0, 4.9e5, TAU * 1e9).expect("valid pair")
}

pub fn trace(samples: usize, seed: u64) -> IQTrace {
    let pair = pair();
    let walk = simulate_phase_walk_len(&pair, samples, SAMPLE_DT, seed).expect("valid walk");
    simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), seed).expect("valid trace")
}

//! Two-laser phase diffusion and balanced I/Q detection.
//!
//! The phase difference ξ(t) between two free-running lasers is a Wiener
//! process with `var ξ(t) = t/τ̄`, where `1/τ̄ = 2(1/τ₁ + 1/τ₂)`. A pair of
//! balanced detectors with a quarter-period offset reads out
//!
//! ```text
//! I = √(I₁I₂)·cos(Δω·t + ξ(t)) + g,   Q = √(I₁I₂)·cos(Δω·t + ξ(t) + π/2) + h
//! ```
//!
//! with `g`, `h` Gaussian shot noise of variance `2(I₁ + I₂)` (the Gaussian
//! limit of the Skellam photocount difference). Intensities are counted in
//! photons per detector response time, which fixes the proportionality
//! constant of the detector response to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quantizer::Quantizer;
use crate::series::{PhaseSeries, Timebase};

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Response time of a 1.6 GHz balanced detector.
pub const DEFAULT_RESPONSE_TIME: f64 = 625e-12;

/// Default ADC headroom over the carrier amplitude.
pub const DEFAULT_HEADROOM: f64 = 1.2;

const WALK_STREAM: u64 = 0;
const DETECTOR_STREAM: u64 = 1;

/// `τ̄ = 1 / (2(1/τ₁ + 1/τ₂))`.
///
/// Either coherence time may be `f64::INFINITY` for a noiseless reference;
/// with both infinite the result is infinite (no diffusion).
pub fn effective_coherence_time(tau_c1: f64, tau_c2: f64) -> Result<f64> {
    for (name, tau) in [("tau_c1", tau_c1), ("tau_c2", tau_c2)] {
        if tau.is_nan() || tau <= 0.0 {
            return Err(domain(format!("{name} must be positive, got {tau}")));
        }
    }
    Ok(1.0 / (2.0 * (1.0 / tau_c1 + 1.0 / tau_c2)))
}

/// Mean photon flux `P / (h·ν)` in photons per second.
pub fn photon_flux(power: f64, frequency: f64) -> Result<f64> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(domain(format!(
            "optical frequency must be positive, got {frequency}"
        )));
    }
    if power.is_nan() || power < 0.0 {
        return Err(domain(format!(
            "optical power must be non-negative, got {power}"
        )));
    }
    Ok(power / (PLANCK * frequency))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserPair {
    /// Coherence time of laser 1, seconds.
    pub tau_c1: f64,
    /// Coherence time of laser 2, seconds.
    pub tau_c2: f64,
    /// Photons per detector response time.
    pub intensity1: f64,
    pub intensity2: f64,
    /// `ω₁ − ω₂`, rad/s.
    pub delta_omega: f64,
}

impl LaserPair {
    pub fn new(
        tau_c1: f64,
        tau_c2: f64,
        intensity1: f64,
        intensity2: f64,
        delta_omega: f64,
    ) -> Result<Self> {
        effective_coherence_time(tau_c1, tau_c2)?;
        for (name, i) in [("intensity1", intensity1), ("intensity2", intensity2)] {
            if !(i.is_finite() && i >= 0.0) {
                return Err(domain(format!(
                    "{name} must be finite and non-negative, got {i}"
                )));
            }
        }
        if !delta_omega.is_finite() {
            return Err(domain("delta_omega must be finite"));
        }
        Ok(Self {
            tau_c1,
            tau_c2,
            intensity1,
            intensity2,
            delta_omega,
        })
    }

    /// Pair whose two lasers share one coherence time and one intensity.
    pub fn symmetric(tau_c: f64, intensity: f64, delta_omega: f64) -> Result<Self> {
        Self::new(tau_c, tau_c, intensity, intensity, delta_omega)
    }

    pub fn effective_coherence_time(&self) -> f64 {
        1.0 / (2.0 * (1.0 / self.tau_c1 + 1.0 / self.tau_c2))
    }

    /// Carrier amplitude `√(I₁I₂)`.
    pub fn amplitude(&self) -> f64 {
        (self.intensity1 * self.intensity2).sqrt()
    }

    /// Shot-noise variance `2(I₁ + I₂)` of each quadrature.
    pub fn shot_noise_variance(&self) -> f64 {
        2.0 * (self.intensity1 + self.intensity2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub adc_bits: u8,
    /// Quantizer clips at ±full_scale (detector units).
    pub full_scale: f64,
    /// Replaces the shot-noise variance when set.
    pub noise_variance_override: Option<f64>,
    /// Detector response time T_det, seconds.
    pub response_time: f64,
}

impl DetectorConfig {
    /// 8-bit ADC with 20% headroom over the pair's carrier amplitude.
    pub fn for_pair(pair: &LaserPair) -> Self {
        let amplitude = pair.amplitude();
        let full_scale = if amplitude > 0.0 {
            DEFAULT_HEADROOM * amplitude
        } else {
            1.0
        };
        Self {
            adc_bits: 8,
            full_scale,
            noise_variance_override: None,
            response_time: DEFAULT_RESPONSE_TIME,
        }
    }

    /// Configuration for data whose only known calibration is the code grid:
    /// one code step per detector unit.
    pub fn code_units(adc_bits: u8) -> Self {
        Self {
            adc_bits,
            full_scale: (1u32 << adc_bits.clamp(1, 16).saturating_sub(1)) as f64,
            noise_variance_override: None,
            response_time: DEFAULT_RESPONSE_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Quantizer::new(self.adc_bits, self.full_scale)?;
        if !(self.response_time.is_finite() && self.response_time > 0.0) {
            return Err(domain(format!(
                "response time must be positive, got {}",
                self.response_time
            )));
        }
        if let Some(v) = self.noise_variance_override {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(format!(
                    "noise variance must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn quantizer(&self) -> Result<Quantizer> {
        Quantizer::new(self.adc_bits, self.full_scale)
    }
}

/// Paired quantized quadratures, stored as ADC codes.
#[derive(Clone, Debug, PartialEq)]
pub struct IQTrace {
    i: Vec<i16>,
    q: Vec<i16>,
    dt: Timebase,
    config: DetectorConfig,
    saturated: bool,
}

impl IQTrace {
    pub fn new(
        i: Vec<i16>,
        q: Vec<i16>,
        dt: Timebase,
        config: DetectorConfig,
        saturated: bool,
    ) -> Result<Self> {
        config.validate()?;
        if i.len() != q.len() {
            return Err(domain(format!(
                "I and Q lengths differ: {} vs {}",
                i.len(),
                q.len()
            )));
        }
        let quantizer = config.quantizer()?;
        if let Some(n) = i
            .iter()
            .zip(&q)
            .position(|(&a, &b)| !quantizer.contains_code(a) || !quantizer.contains_code(b))
        {
            return Err(domain(format!(
                "sample {n} is outside the {}-bit codebook",
                config.adc_bits
            )));
        }
        Ok(Self {
            i,
            q,
            dt,
            config,
            saturated,
        })
    }

    pub fn i_codes(&self) -> &[i16] {
        &self.i
    }

    pub fn q_codes(&self) -> &[i16] {
        &self.q
    }

    pub fn dt(&self) -> Timebase {
        self.dt
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Set when the ADC range is below the carrier amplitude, so clipping
    /// is routine rather than occasional.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Sample `n` in detector units.
    pub fn sample(&self, n: usize) -> (f64, f64) {
        let quantizer = self.quantizer();
        (quantizer.level(self.i[n]), quantizer.level(self.q[n]))
    }

    pub fn quantizer(&self) -> Quantizer {
        // validated at construction
        Quantizer::new(self.config.adc_bits, self.config.full_scale).expect("validated config")
    }

    /// Contiguous sub-trace `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            i: self.i[start..end].to_vec(),
            q: self.q[start..end].to_vec(),
            dt: self.dt,
            config: self.config,
            saturated: self.saturated,
        }
    }
}

/// Wiener phase walk sampled every `dt` over `duration` (inclusive of both
/// endpoints when `duration` is a multiple of `dt`). `ξ(0) = 0`.
pub fn simulate_phase_walk(
    pair: &LaserPair,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<PhaseSeries> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(domain(format!(
            "duration {duration} s is shorter than dt {dt} s"
        )));
    }
    let steps = (duration / dt * (1.0 + 1e-12)).floor() as usize;
    simulate_phase_walk_len(pair, steps + 1, dt, seed)
}

/// Wiener phase walk with an explicit sample count.
pub fn simulate_phase_walk_len(
    pair: &LaserPair,
    samples: usize,
    dt: f64,
    seed: u64,
) -> Result<PhaseSeries> {
    if samples == 0 {
        return Err(domain("phase walk needs at least one sample"));
    }
    let sigma = (dt / pair.effective_coherence_time()).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WALK_STREAM);
    let mut xi = Vec::with_capacity(samples);
    let mut acc = 0.0;
    xi.push(acc);
    for _ in 1..samples {
        let z: f64 = rng.sample(StandardNormal);
        acc += sigma * z;
        xi.push(acc);
    }
    PhaseSeries::new(xi, dt, 0.0)
}

/// Noiseless, unquantized quadratures `(I, Q)` for each sample of `xi`.
pub fn ideal_quadratures(xi: &PhaseSeries, pair: &LaserPair) -> Vec<(f64, f64)> {
    let amplitude = pair.amplitude();
    xi.samples()
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let (s, c) = (pair.delta_omega * xi.time(n) + x).sin_cos();
            (amplitude * c, -amplitude * s)
        })
        .collect()
}

/// Balanced-detector readout of the walk `xi`, quantized by the ADC.
pub fn simulate_iq_trace(
    xi: &PhaseSeries,
    pair: &LaserPair,
    config: &DetectorConfig,
    seed: u64,
) -> Result<IQTrace> {
    config.validate()?;
    let quantizer = config.quantizer()?;
    let dt = Timebase::from_seconds(xi.dt())?;
    let amplitude = pair.amplitude();
    let sigma = config
        .noise_variance_override
        .unwrap_or_else(|| pair.shot_noise_variance())
        .sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DETECTOR_STREAM);

    let n = xi.len();
    let mut i = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for (k, &x) in xi.samples().iter().enumerate() {
        let (s, c) = (pair.delta_omega * xi.time(k) + x).sin_cos();
        // cos(φ + π/2) = −sin φ
        let (mut vi, mut vq) = (amplitude * c, -amplitude * s);
        if sigma > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            let h: f64 = rng.sample(StandardNormal);
            vi += sigma * g;
            vq += sigma * h;
        }
        i.push(quantizer.code(vi));
        q.push(quantizer.code(vq));
    }
    let saturated = config.full_scale < amplitude;
    IQTrace::new(i, q, dt, *config, saturated)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    const US: f64 = 1e-6;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn effective_coherence_time_examples() {
        assert!(close(
            effective_coherence_time(20.0 * US, 20.0 * US).unwrap(),
            5.0 * US,
            1e-12
        ));
        assert!(close(
            effective_coherence_time(f64::INFINITY, 10.0 * US).unwrap(),
            5.0 * US,
            1e-12
        ));
        assert!(close(
            effective_coherence_time(10.0 * US, 40.0 * US).unwrap(),
            4.0 * US,
            1e-12
        ));
        assert_eq!(
            effective_coherence_time(f64::INFINITY, f64::INFINITY).unwrap(),
            f64::INFINITY
        );
        assert!(effective_coherence_time(0.0, 1.0).is_err());
        assert!(effective_coherence_time(1.0, -1.0).is_err());
        assert!(effective_coherence_time(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn effective_time_is_at_most_half_the_shorter() {
        for (a, b) in [(1.0, 1.0), (1.0, 3.0), (0.2, 9.0), (5.0, f64::INFINITY)] {
            let t = effective_coherence_time(a, b).unwrap();
            assert!(t > 0.0 && t <= f64::min(a, b) / 2.0 * (1.0 + 1e-15));
        }
    }

    #[test]
    fn photon_flux_examples() {
        let phi = photon_flux(1e-4, 193.4e12).unwrap();
        assert!(close(phi, 7.8e14, 0.01), "{phi}");
        assert!(close(phi * 625e-12, 4.9e5, 0.02));
        assert_eq!(photon_flux(0.0, 1e14).unwrap(), 0.0);
        assert!(photon_flux(1e-3, 0.0).is_err());
        assert!(photon_flux(-1.0, 1e14).is_err());
        assert!(close(dbm_to_watts(-10.0), 1e-4, 1e-12));
    }

    #[test]
    fn laser_pair_validation() {
        assert!(LaserPair::new(0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(LaserPair::new(1.0, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(LaserPair::new(1.0, 1.0, 1.0, 1.0, f64::NAN).is_err());
        let pair = LaserPair::new(1.0, 1.0, 4.0, 9.0, 0.0).unwrap();
        assert_eq!(pair.amplitude(), 6.0);
        assert_eq!(pair.shot_noise_variance(), 26.0);
    }

    #[test]
    fn walk_is_deterministic_and_starts_at_zero() {
        let pair = LaserPair::symmetric(20.0 * US, 1.0, 0.0).unwrap();
        let a = simulate_phase_walk(&pair, 50.0 * US, 0.1 * US, 7).unwrap();
        let b = simulate_phase_walk(&pair, 50.0 * US, 0.1 * US, 7).unwrap();
        let c = simulate_phase_walk(&pair, 50.0 * US, 0.1 * US, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.samples()[0], 0.0);
        assert_eq!(a.len(), 501);
    }

    #[test]
    fn walk_rejects_short_duration() {
        let pair = LaserPair::symmetric(1.0, 1.0, 0.0).unwrap();
        assert!(simulate_phase_walk(&pair, 0.5, 1.0, 0).is_err());
        assert!(simulate_phase_walk(&pair, 1.0, 0.0, 0).is_err());
        assert_eq!(simulate_phase_walk(&pair, 1.0, 1.0, 0).unwrap().len(), 2);
    }

    #[test]
    fn infinite_coherence_gives_flat_walk() {
        let pair = LaserPair::symmetric(f64::INFINITY, 1.0, 0.0).unwrap();
        let walk = simulate_phase_walk(&pair, 1.0, 0.01, 3).unwrap();
        assert!(walk.samples().iter().all(|&x| x == 0.0));
        let pair = LaserPair::symmetric(1e300, 1.0, 0.0).unwrap();
        let walk = simulate_phase_walk(&pair, 1.0, 0.01, 3).unwrap();
        assert!(walk.samples().iter().all(|&x| x.abs() < 1e-100));
    }

    #[test]
    fn walk_increments_are_uncorrelated() {
        let pair = LaserPair::symmetric(4.0, 1.0, 0.0).unwrap();
        let walk = simulate_phase_walk_len(&pair, 1_000_001, 1.0, 11).unwrap();
        let d: Vec<f64> = walk.samples().windows(2).map(|w| w[1] - w[0]).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let lag1 = d
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / var;
        assert!(lag1.abs() < 5.0 / n.sqrt(), "lag-1 autocorrelation {lag1}");
        // per-step variance dt/τ̄ = 1/(4/2/2) = 1
        assert!(close(var / n, 1.0, 0.01));
    }

    #[test]
    fn ensemble_variance_grows_linearly() {
        // τ̄ = 1, so var ξ(t) = t.
        let pair = LaserPair::symmetric(4.0, 1.0, 0.0).unwrap();
        let dt = 0.05;
        let times = [0.5, 1.0, 2.0, 5.0];
        let seeds = 10_000;
        let mut sums = [0.0; 4];
        for seed in 0..seeds {
            let walk = simulate_phase_walk(&pair, 5.0, dt, seed).unwrap();
            for (s, &t) in sums.iter_mut().zip(&times) {
                let x = walk.samples()[(t / dt).round() as usize];
                *s += x * x;
            }
        }
        for (s, &t) in sums.iter().zip(&times) {
            let var = s / seeds as f64;
            assert!(close(var, t, 0.05), "var at t={t}: {var}");
        }
    }

    #[test]
    fn zero_phase_trace() {
        let pair = LaserPair::symmetric(1.0, 100.0, 0.0).unwrap();
        let config = DetectorConfig {
            noise_variance_override: Some(0.0),
            ..DetectorConfig::for_pair(&pair)
        };
        let xi = PhaseSeries::new(vec![0.0; 16], 1e-9, 0.0).unwrap();
        let trace = simulate_iq_trace(&xi, &pair, &config, 1).unwrap();
        let quantizer = config.quantizer().unwrap();
        for n in 0..trace.len() {
            let (i, q) = trace.sample(n);
            assert_eq!(i, quantizer.quantize(100.0));
            assert_eq!(q, quantizer.quantize(0.0));
        }
        assert!(!trace.saturated());
    }

    #[test]
    fn noiseless_carrier_advances_by_delta_omega_dt() {
        let delta_omega = 2.0 * PI * 1e9;
        let dt = 40e-12;
        let pair = LaserPair::symmetric(1.0, 1e4, delta_omega).unwrap();
        let config = DetectorConfig {
            noise_variance_override: Some(0.0),
            ..DetectorConfig::for_pair(&pair)
        };
        let xi = PhaseSeries::new(vec![0.0; 200], dt, 0.0).unwrap();
        let trace = simulate_iq_trace(&xi, &pair, &config, 1).unwrap();
        let step = config.quantizer().unwrap().step();
        // worst-case angular error of one quantized point
        let bound = (step / std::f64::consts::SQRT_2 / pair.amplitude()).asin();
        for n in 1..trace.len() {
            let (i0, q0) = trace.sample(n - 1);
            let (i1, q1) = trace.sample(n);
            // arg(I + iQ) = −φ with Q = −A sin φ
            let advance = crate::series::wrap_angle(q1.atan2(i1) - q0.atan2(i0));
            assert!((advance + delta_omega * dt).abs() <= 2.0 * bound);
        }
    }

    #[test]
    fn ideal_quadratures_lie_on_circle() {
        let pair = LaserPair::new(1.0, 2.0, 3.0, 12.0, 1.7e3).unwrap();
        let walk = simulate_phase_walk(&pair, 1.0, 1e-3, 5).unwrap();
        for (i, q) in ideal_quadratures(&walk, &pair) {
            assert!((i * i + q * q - 36.0).abs() < 1e-12);
        }
    }

    #[test]
    fn high_photon_numbers_give_clean_carrier() {
        let pair = LaserPair::symmetric(20.0 * US, 4.9e5, 0.0).unwrap();
        assert!(close(pair.amplitude(), 4.9e5, 1e-12));
        let sigma = pair.shot_noise_variance().sqrt();
        assert!((sigma - 1400.0).abs() < 1.0);
        assert!((pair.amplitude() / sigma - 350.0).abs() < 1.0);
    }

    #[test]
    fn saturation_flag() {
        let pair = LaserPair::symmetric(1.0, 100.0, 0.0).unwrap();
        let config = DetectorConfig {
            full_scale: 50.0,
            ..DetectorConfig::for_pair(&pair)
        };
        let xi = PhaseSeries::new(vec![0.0; 4], 1e-9, 0.0).unwrap();
        let trace = simulate_iq_trace(&xi, &pair, &config, 1).unwrap();
        assert!(trace.saturated());
        assert!(trace.i_codes().iter().all(|&c| c == 127));
    }

    #[test]
    fn trace_rejects_mismatched_or_out_of_codebook() {
        let config = DetectorConfig::code_units(4);
        let dt = Timebase::from_femtoseconds(1).unwrap();
        assert!(IQTrace::new(vec![0], vec![], dt, config, false).is_err());
        assert!(IQTrace::new(vec![8], vec![0], dt, config, false).is_err());
        assert!(IQTrace::new(vec![7], vec![-8], dt, config, false).is_ok());
    }
}

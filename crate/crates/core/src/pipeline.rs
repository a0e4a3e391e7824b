//! Phase extraction: `arg(I + iQ)` → unwrap → detrend → increment → wrap →
//! k-bit symbol.
//!
//! The detrend step removes the carrier slope with the sample mean of the
//! first differences of the unwrapped phase, so the recovered walk has zero
//! net drift over each detrend block. Blocks are either the whole trace or a
//! fixed number of first differences; the block length is part of the
//! configuration and must be recorded to reproduce a stream.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::bitstream::BitStream;
use crate::error::{domain, Error, Result};
use crate::series::{wrap_angle, PhaseSeries, Timebase};
use crate::sim::IQTrace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Bits per output symbol, 1..=16.
    pub out_bits: u8,
    /// Carrier offset in rad/s. Estimated per block when absent.
    pub delta_omega_estimate: Option<f64>,
    /// Detrend block length in first differences; `None` detrends globally.
    pub chunk: Option<usize>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            out_bits: 8,
            delta_omega_estimate: None,
            chunk: None,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.out_bits) {
            return Err(domain(format!(
                "out_bits must be 1..=16, got {}",
                self.out_bits
            )));
        }
        if self.chunk == Some(0) {
            return Err(domain("chunk length must be positive"));
        }
        if let Some(w) = self.delta_omega_estimate {
            if !w.is_finite() {
                return Err(domain("delta_omega estimate must be finite"));
            }
        }
        Ok(())
    }
}

/// `arg(I + iQ)` of one ADC code pair, in code units.
#[inline]
fn code_phase(i: i16, q: i16) -> f64 {
    (q as f64 + 0.5).atan2(i as f64 + 0.5)
}

/// Four-quadrant angle of each `(I, Q)` pair, in (−π, π].
///
/// `atan2` returns −π for `(negative, −0.0)`; those samples are mapped to π.
pub fn phase_from_components(i: &[f64], q: &[f64], dt: f64) -> Result<PhaseSeries> {
    if i.len() != q.len() {
        return Err(domain(format!(
            "I and Q lengths differ: {} vs {}",
            i.len(),
            q.len()
        )));
    }
    let mut out = Vec::with_capacity(i.len());
    for (index, (&a, &b)) in i.iter().zip(q).enumerate() {
        if a == 0.0 && b == 0.0 {
            return Err(Error::DegenerateSample { index });
        }
        let phi = b.atan2(a);
        out.push(if phi == -PI { PI } else { phi });
    }
    PhaseSeries::new(out, dt, 0.0)
}

/// Instantaneous phase of every trace sample.
///
/// The mid-rise ADC never reconstructs to zero, so trace samples are never
/// degenerate; only the level offset matters for the angle, not the scale.
pub fn instantaneous_phase(trace: &IQTrace) -> Result<PhaseSeries> {
    if trace.is_empty() {
        return Err(domain("trace is empty"));
    }
    let samples = trace
        .i_codes()
        .iter()
        .zip(trace.q_codes())
        .map(|(&i, &q)| code_phase(i, q))
        .collect();
    PhaseSeries::new(samples, trace.dt().seconds(), 0.0)
}

/// Number of whole turns to add so that `d` lands in (−π, π].
#[inline]
fn turns(d: f64) -> i64 {
    if d > -PI && d <= PI {
        0
    } else {
        -(d / TAU - 0.5).ceil() as i64
    }
}

/// Removes 2π jumps so that consecutive differences lie in (−π, π].
///
/// Every output sample is `input + 2π·K` for an integer `K`; the first
/// sample is unchanged.
pub fn unwrap(wrapped: &PhaseSeries) -> PhaseSeries {
    let s = wrapped.samples();
    let mut out = Vec::with_capacity(s.len());
    let mut k: i64 = 0;
    out.push(s[0]);
    for w in s.windows(2) {
        k += turns(w[1] - w[0]);
        out.push(w[1] + TAU * k as f64);
    }
    PhaseSeries::new(out, wrapped.dt(), wrapped.t0()).expect("same shape as input")
}

/// Detrended walk and the carrier estimates of its blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Detrended {
    /// ξ sampled at the input's samples 1..N; the integration constant is
    /// fixed by ξ = 0 at the input's first sample, which is not repeated.
    pub xi: PhaseSeries,
    /// Carrier offset (rad/s) subtracted in each block.
    pub delta_omega: Vec<f64>,
}

/// Global detrend: returns ξ and the carrier offset in rad/s.
///
/// With `d_n = Θ_{n+1} − Θ_n` and offset `c = Δω·dt` (the mean of `d` when
/// `delta_omega` is `None`), ξ is the running sum of `d_n − c`.
pub fn detrend(theta: &PhaseSeries, delta_omega: Option<f64>) -> Result<(PhaseSeries, f64)> {
    let out = detrend_blocks(theta, delta_omega, None)?;
    Ok((out.xi, out.delta_omega[0]))
}

/// Detrend with a separate offset per block of `chunk` first differences.
pub fn detrend_blocks(
    theta: &PhaseSeries,
    delta_omega: Option<f64>,
    chunk: Option<usize>,
) -> Result<Detrended> {
    if theta.len() < 2 {
        return Err(domain("detrending needs at least two samples"));
    }
    if chunk == Some(0) {
        return Err(domain("chunk length must be positive"));
    }
    let dt = theta.dt();
    let d: Vec<f64> = theta.samples().windows(2).map(|w| w[1] - w[0]).collect();
    let block = chunk.unwrap_or(d.len());
    let mut xi = Vec::with_capacity(d.len());
    let mut estimates = Vec::with_capacity(d.len().div_ceil(block));
    let mut acc = 0.0;
    for b in d.chunks(block) {
        let offset = block_offset(b, delta_omega, dt);
        estimates.push(offset / dt);
        for &x in b {
            acc += x - offset;
            xi.push(acc);
        }
    }
    Ok(Detrended {
        xi: PhaseSeries::new(xi, dt, theta.t0() + dt)?,
        delta_omega: estimates,
    })
}

#[inline]
fn block_offset(block: &[f64], delta_omega: Option<f64>, dt: f64) -> f64 {
    match delta_omega {
        Some(w) => w * dt,
        None => block.iter().sum::<f64>() / block.len() as f64,
    }
}

/// `wrap(ξ_{n+1} − ξ_n)` for each consecutive pair.
pub fn phase_increments(xi: &PhaseSeries) -> Result<PhaseSeries> {
    if xi.len() < 2 {
        return Err(domain("increments need at least two samples"));
    }
    let inc = xi
        .samples()
        .windows(2)
        .map(|w| wrap_angle(w[1] - w[0]))
        .collect();
    PhaseSeries::new(inc, xi.dt(), xi.t0() + xi.dt())
}

/// Bin index of `theta ∈ (−π, π]` among `2^k` equal bins; bin `i` covers
/// `(−π + iδ, −π + (i+1)δ]` with `δ = 2π/2^k`.
#[inline]
pub fn bin_index(theta: f64, k: u8) -> u16 {
    let bins = (1u32 << k) as f64;
    let delta = TAU / bins;
    let i = ((theta + PI) / delta).ceil() - 1.0;
    i.clamp(0.0, bins - 1.0) as u16
}

pub fn discretize(wrapped: &PhaseSeries, k: u8) -> Result<BitStream> {
    if !(1..=16).contains(&k) {
        return Err(domain(format!("bit depth must be 1..=16, got {k}")));
    }
    let mut symbols = Vec::with_capacity(wrapped.len());
    for (n, &theta) in wrapped.samples().iter().enumerate() {
        if !(theta > -PI && theta <= PI) {
            return Err(domain(format!("sample {n} ({theta}) is outside (-pi, pi]")));
        }
        symbols.push(bin_index(theta, k));
    }
    BitStream::new(symbols, k, Timebase::from_seconds(wrapped.dt())?)
}

/// Everything produced by one extraction run.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub stream: BitStream,
    /// Wrapped phase increments before discretization.
    pub increments: Vec<f64>,
    /// Carrier offset (rad/s) used in each detrend block.
    pub delta_omega: Vec<f64>,
}

impl Extraction {
    /// Mean carrier offset across blocks, rad/s.
    pub fn mean_delta_omega(&self) -> f64 {
        if self.delta_omega.is_empty() {
            return 0.0;
        }
        self.delta_omega.iter().sum::<f64>() / self.delta_omega.len() as f64
    }
}

/// Full chain on a whole trace. Output length is `trace.len() − 2`.
pub fn extract(trace: &IQTrace, config: &ExtractionConfig) -> Result<Extraction> {
    config.validate()?;
    let dt = trace.dt();
    if trace.len() < 3 {
        if trace.is_empty() {
            return Err(domain("trace is empty"));
        }
        let delta_omega = if trace.len() == 2 {
            let theta = unwrap(&instantaneous_phase(trace)?);
            detrend_blocks(&theta, config.delta_omega_estimate, config.chunk)?.delta_omega
        } else {
            Vec::new()
        };
        return Ok(Extraction {
            stream: BitStream::new(Vec::new(), config.out_bits, dt)?,
            increments: Vec::new(),
            delta_omega,
        });
    }
    let theta = unwrap(&instantaneous_phase(trace)?);
    let detrended = detrend_blocks(&theta, config.delta_omega_estimate, config.chunk)?;
    let increments = phase_increments(&detrended.xi)?;
    let symbols = increments
        .samples()
        .iter()
        .map(|&x| bin_index(x, config.out_bits))
        .collect();
    Ok(Extraction {
        stream: BitStream::new(symbols, config.out_bits, dt)?,
        increments: increments.into_samples(),
        delta_omega: detrended.delta_omega,
    })
}

pub fn extract_bits(trace: &IQTrace, config: &ExtractionConfig) -> Result<BitStream> {
    extract(trace, config).map(|e| e.stream)
}

/// Incremental form of [`extract`] that accepts the trace in arbitrary
/// pieces. For the same trace and configuration the output is bit-identical
/// to whole-trace extraction; only the detrend block is held in memory (the
/// whole trace when detrending globally).
#[derive(Clone, Debug)]
pub struct StreamingExtractor {
    config: ExtractionConfig,
    dt: Timebase,
    prev_phase: Option<f64>,
    prev_theta: f64,
    turns: i64,
    block: Vec<f64>,
    xi: Option<f64>,
    acc: f64,
    symbols: Vec<u16>,
    increments: Vec<f64>,
    delta_omega: Vec<f64>,
}

impl StreamingExtractor {
    pub fn new(config: ExtractionConfig, dt: Timebase) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            dt,
            prev_phase: None,
            prev_theta: 0.0,
            turns: 0,
            block: Vec::new(),
            xi: None,
            acc: 0.0,
            symbols: Vec::new(),
            increments: Vec::new(),
            delta_omega: Vec::new(),
        })
    }

    pub fn push(&mut self, i: &[i16], q: &[i16]) -> Result<()> {
        if i.len() != q.len() {
            return Err(domain(format!(
                "I and Q lengths differ: {} vs {}",
                i.len(),
                q.len()
            )));
        }
        for (&a, &b) in i.iter().zip(q) {
            let phase = code_phase(a, b);
            match self.prev_phase {
                None => self.prev_theta = phase,
                Some(prev) => {
                    self.turns += turns(phase - prev);
                    let theta = phase + TAU * self.turns as f64;
                    self.block.push(theta - self.prev_theta);
                    self.prev_theta = theta;
                    if Some(self.block.len()) == self.config.chunk {
                        self.flush_block();
                    }
                }
            }
            self.prev_phase = Some(phase);
        }
        Ok(())
    }

    fn flush_block(&mut self) {
        if self.block.is_empty() {
            return;
        }
        let dt = self.dt.seconds();
        let offset = block_offset(&self.block, self.config.delta_omega_estimate, dt);
        self.delta_omega.push(offset / dt);
        for &d in &self.block {
            self.acc += d - offset;
            if let Some(prev) = self.xi {
                let inc = wrap_angle(self.acc - prev);
                self.increments.push(inc);
                self.symbols.push(bin_index(inc, self.config.out_bits));
            }
            self.xi = Some(self.acc);
        }
        self.block.clear();
    }

    pub fn finish(mut self) -> Result<Extraction> {
        if self.prev_phase.is_none() {
            return Err(domain("trace is empty"));
        }
        self.flush_block();
        Ok(Extraction {
            stream: BitStream::new(self.symbols, self.config.out_bits, self.dt)?,
            increments: self.increments,
            delta_omega: self.delta_omega,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sim::{simulate_iq_trace, simulate_phase_walk_len, DetectorConfig, LaserPair};

    fn series(v: Vec<f64>) -> PhaseSeries {
        PhaseSeries::new(v, 1.0, 0.0).unwrap()
    }

    fn circ_dist(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn phase_of_axes() {
        let p =
            phase_from_components(&[1.0, 0.0, -1.0, -1.0], &[0.0, 1.0, 0.0, -0.0], 1.0).unwrap();
        assert_eq!(p.samples(), &[0.0, FRAC_PI_2, PI, PI]);
    }

    #[test]
    fn degenerate_sample_is_named() {
        let err = phase_from_components(&[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample { index: 1 }));
    }

    #[test]
    fn unwrap_single_correction() {
        let u = unwrap(&series(vec![0.0, 3.0, -3.0]));
        assert_eq!(u.samples()[..2], [0.0, 3.0]);
        assert!((u.samples()[2] - (3.0 + (TAU - 6.0))).abs() < 1e-12);
        assert!((u.samples()[2] - 3.2832).abs() < 1e-4);
    }

    #[test]
    fn unwrap_identity_when_steps_small() {
        let s = series(vec![0.1, 1.0, 2.0, 3.0, 2.5, 0.0, -3.0]);
        assert_eq!(unwrap(&s), s);
    }

    #[test]
    fn detrend_pure_carrier_and_constant() {
        let dt = 0.25;
        let w = 1.3;
        let theta =
            PhaseSeries::new((0..50).map(|n| w * n as f64 * dt).collect(), dt, 0.0).unwrap();
        let (xi, est) = detrend(&theta, None).unwrap();
        assert!(xi.samples().iter().all(|x| x.abs() < 1e-12));
        assert!((est - w).abs() < 1e-12);
        assert_eq!(xi.len(), 49);

        let theta = PhaseSeries::new(vec![2.0; 10], dt, 0.0).unwrap();
        let (xi, est) = detrend(&theta, None).unwrap();
        assert!(xi.samples().iter().all(|&x| x == 0.0));
        assert_eq!(est, 0.0);
    }

    #[test]
    fn detrend_needs_two_samples() {
        assert!(detrend(&series(vec![1.0]), None).is_err());
        assert!(phase_increments(&series(vec![1.0])).is_err());
    }

    #[test]
    fn detrend_with_known_carrier() {
        let theta = series(vec![0.0, 1.0, 2.5, 3.0]);
        let (xi, est) = detrend(&theta, Some(1.0)).unwrap();
        assert_eq!(est, 1.0);
        assert_eq!(xi.samples(), &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn detrended_walk_has_zero_net_drift() {
        let theta = series(vec![0.0, 0.3, 0.1, 1.7, 1.2, 2.9]);
        let (xi, _) = detrend(&theta, None).unwrap();
        assert!(xi.samples().last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn increments_examples() {
        let inc = phase_increments(&series(vec![0.0, 1.5 * PI, 2.5 * PI])).unwrap();
        assert!((inc.samples()[0] + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(inc.samples()[1], PI);
        let flat = phase_increments(&series(vec![4.0; 6])).unwrap();
        assert!(flat.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn discretize_boundaries() {
        let delta = TAU / 256.0;
        let s = discretize(&series(vec![PI, 0.0, -PI + delta / 2.0, -PI + 1e-15]), 8).unwrap();
        assert_eq!(s.symbols(), &[255, 127, 0, 0]);
        assert!(discretize(&series(vec![-PI]), 8).is_err());
        assert!(discretize(&series(vec![3.5]), 8).is_err());
        assert!(discretize(&series(vec![0.0]), 0).is_err());
    }

    #[test]
    fn discretize_bins_have_equal_width() {
        for k in [1u8, 3, 8, 12] {
            let bins = 1u32 << k;
            let delta = TAU / bins as f64;
            for i in 0..bins.min(4096) {
                let lo = -PI + i as f64 * delta;
                let hi = lo + delta;
                assert_eq!(
                    bin_index(hi - delta * 1e-9, k) as u32,
                    i,
                    "upper edge k={k} i={i}"
                );
                assert_eq!(bin_index(lo + delta * 1e-6, k) as u32, i);
                assert_eq!(bin_index(lo + delta / 2.0, k) as u32, i);
            }
        }
    }

    #[test]
    fn extract_length_and_rate() {
        let pair = LaserPair::symmetric(1e-6, 4.9e5, 2.0 * PI * 1e9).unwrap();
        let dt = 6.4e-6;
        let xi = simulate_phase_walk_len(&pair, 20, dt, 1).unwrap();
        let trace = simulate_iq_trace(&xi, &pair, &DetectorConfig::for_pair(&pair), 1).unwrap();
        let stream = extract_bits(&trace, &ExtractionConfig::default()).unwrap();
        assert_eq!(stream.len(), 18);
        assert_eq!(stream.bit_rate(), 1.25e6);

        let short = extract_bits(&trace.slice(0, 2), &ExtractionConfig::default()).unwrap();
        assert!(short.is_empty());
        assert!(extract_bits(&trace.slice(0, 0), &ExtractionConfig::default()).is_err());
    }

    fn random_trace(seed: u64, n: usize) -> IQTrace {
        let pair = LaserPair::symmetric(2e-6, 1e4, 2.0 * PI * 3e4).unwrap();
        let xi = simulate_phase_walk_len(&pair, n, 1e-6, seed).unwrap();
        simulate_iq_trace(&xi, &pair, &DetectorConfig::for_pair(&pair), seed).unwrap()
    }

    #[test]
    fn detrend_is_invariant_to_added_line() {
        let trace = random_trace(3, 500);
        let theta = unwrap(&instantaneous_phase(&trace).unwrap());
        let (xi, _) = detrend(&theta, None).unwrap();
        let shifted: Vec<f64> = theta
            .samples()
            .iter()
            .enumerate()
            .map(|(n, &x)| x + 1.25 + 0.37 * n as f64)
            .collect();
        let (xi2, _) = detrend(&series(shifted), None).unwrap();
        for (a, b) in xi.samples().iter().zip(xi2.samples()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn streaming_matches_whole_trace(
            seed in 0u64..1000,
            n in 1usize..400,
            chunk in proptest::option::of(1usize..64),
            pieces in proptest::collection::vec(1usize..50, 1..20),
        ) {
            let trace = random_trace(seed, n);
            let config = ExtractionConfig { out_bits: 8, delta_omega_estimate: None, chunk };
            let whole = extract(&trace, &config).unwrap();
            let mut streaming = StreamingExtractor::new(config, trace.dt()).unwrap();
            let mut start = 0;
            for p in pieces.iter().cycle() {
                if start >= n { break; }
                let end = (start + p).min(n);
                streaming.push(&trace.i_codes()[start..end], &trace.q_codes()[start..end]).unwrap();
                start = end;
            }
            let streamed = streaming.finish().unwrap();
            prop_assert_eq!(&streamed.stream, &whole.stream);
            prop_assert_eq!(streamed.delta_omega, whole.delta_omega);
            prop_assert_eq!(streamed.increments, whole.increments);
        }

        #[test]
        fn unwrap_then_wrap_is_identity(v in proptest::collection::vec(-PI..=PI, 1..64)) {
            let v: Vec<f64> = v.into_iter().map(|x| if x == -PI { PI } else { x }).collect();
            let s = series(v);
            let back = unwrap(&s).wrapped();
            for (a, b) in back.samples().iter().zip(s.samples()) {
                prop_assert!(circ_dist(*a, *b) < 1e-12);
            }
        }

        #[test]
        fn wrap_then_unwrap_recovers_up_to_offset(
            start in -100.0f64..100.0,
            steps in proptest::collection::vec(-3.1f64..3.1, 1..64),
        ) {
            let mut acc = start;
            let mut truth = vec![acc];
            for s in steps { acc += s; truth.push(acc); }
            let s = series(truth.clone());
            let u = unwrap(&s.wrapped());
            let offset = truth[0] - u.samples()[0];
            prop_assert!((offset / TAU - (offset / TAU).round()).abs() < 1e-9);
            for (a, b) in u.samples().iter().zip(&truth) {
                prop_assert!((a + offset - b).abs() < 1e-9);
            }
        }

        #[test]
        fn discretize_is_monotone(mut v in proptest::collection::vec((-PI + 1e-9)..=PI, 2..100), k in 1u8..=16) {
            v.sort_by(f64::total_cmp);
            let s = discretize(&series(v), k).unwrap();
            prop_assert!(s.symbols().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn unwrap_consecutive_differences_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random_range(-PI..PI)).collect();
        let u = unwrap(&series(v));
        for w in u.samples().windows(2) {
            let d = w[1] - w[0];
            assert!(d > -PI - 1e-9 && d <= PI + 1e-9);
        }
    }
}

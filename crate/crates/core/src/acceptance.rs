//! End-to-end acceptance checks.
//!
//! Each criterion is a plain function returning a [`CriterionOutcome`]; the
//! `acceptance` test target and `phaseqrng selftest` both run them through
//! [`run_criterion`]. Several criteria simulate 10⁶–10⁹ samples and need an
//! optimized build.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::{read_bitstream, read_trace, write_bitstream, write_trace, Provenance};
use crate::pipeline::{detrend, extract, instantaneous_phase, unwrap, ExtractionConfig};
use crate::series::{wrap_angle, PhaseSeries, Timebase};
use crate::sim::{
    photon_flux, simulate_iq_trace, simulate_phase_walk, simulate_phase_walk_len, DetectorConfig,
    LaserPair,
};
use crate::stats::{
    autocorrelation, chi_square_symbols, ks_test, monobit_test, runs_test, Thresholds,
};
use crate::vonmises::{discretized_probs, fit_vonmises, max_uniform_deviation, VonMisesModel};

pub const CRITERIA: std::ops::RangeInclusive<u8> = 1..=10;

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "variance growth",
        2 => "uniformity deviation bound",
        3 => "von mises normalization",
        4 => "fit recovery",
        5 => "photon arithmetic",
        6 => "autocorrelation",
        7 => "end-to-end randomness",
        8 => "pipeline fidelity",
        9 => "round trips",
        10 => "rate bookkeeping",
        _ => "unknown",
    }
}

/// Runs one criterion. Internal errors count as failures.
pub fn run_criterion(id: u8) -> CriterionOutcome {
    let start = Instant::now();
    let result = match id {
        1 => variance_growth(),
        2 => deviation_bound(),
        3 => normalization(),
        4 => fit_recovery(),
        5 => photon_arithmetic(),
        6 => end_to_end_autocorrelation(),
        7 => end_to_end_randomness(),
        8 => pipeline_fidelity(),
        9 => round_trips(),
        10 => rate_bookkeeping(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let elapsed = start.elapsed();
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome {
        id,
        title: title(id),
        passed,
        detail,
        elapsed,
    }
}

/// Runs every criterion in order, handing each outcome to `report` as soon
/// as it is known.
pub fn run_all(mut report: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    CRITERIA
        .map(|id| {
            let outcome = run_criterion(id);
            report(&outcome);
            outcome
        })
        .collect()
}

type Check = Result<(bool, String)>;

fn within_limit(start: Instant, limit: f64) -> (bool, f64) {
    let secs = start.elapsed().as_secs_f64();
    (secs < limit, secs)
}

fn variance_growth() -> Check {
    let start = Instant::now();
    let pair = LaserPair::symmetric(20e-6, 1.0, 0.0)?;
    let (dt, duration) = (0.1e-6, 10e-6);
    let seeds = 10_000u64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for seed in 0..seeds {
        let walk = simulate_phase_walk(&pair, duration, dt, seed)?;
        let x = *walk.samples().last().expect("non-empty walk");
        sum += x;
        sum_sq += x * x;
    }
    let n = seeds as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    let (fast, secs) = within_limit(start, 10.0);
    let ok = (var - 2.0).abs() <= 0.1 && fast;
    Ok((
        ok,
        format!("var(ξ(10 µs)) = {var:.4} rad² (2.0 ± 0.1), {secs:.2}s < 10s"),
    ))
}

fn deviation_bound() -> Check {
    let start = Instant::now();
    let at_two = max_uniform_deviation(&VonMisesModel::from_variance_parameter(2.0)?, 8)?;
    let at_zero = max_uniform_deviation(&VonMisesModel::new(0.0)?, 8)?;
    let grid = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let devs = grid
        .iter()
        .map(|&k| max_uniform_deviation(&VonMisesModel::new(k)?, 8))
        .collect::<Result<Vec<_>>>()?;
    let monotone = devs.windows(2).all(|w| w[1] > w[0]);
    let (fast, secs) = within_limit(start, 1.0);
    let ok = at_two < 1e-5 && at_zero == 0.0 && monotone && fast;
    Ok((
        ok,
        format!(
            "deviation(t/τ̄=2) = {at_two:.4e} (< 1e-5), κ=0 → {at_zero:e}, monotone={monotone}, {secs:.3}s"
        ),
    ))
}

fn normalization() -> Check {
    let mut worst: f64 = 0.0;
    for kappa in [0.0, 0.1, 1.0, 10.0, 100.0] {
        let total: f64 = discretized_probs(&VonMisesModel::new(kappa)?, 8)?
            .iter()
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok((
        worst < 1e-10,
        format!("max |∫pdf − 1| = {worst:.2e} (< 1e-10)"),
    ))
}

fn fit_recovery() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (target, seed) in [(1.78, 41), (0.172, 42)] {
        let start = Instant::now();
        let tau = 1.0;
        let pair = LaserPair::new(4.0 * tau, 4.0 * tau, 1.0, 1.0, 0.0)?;
        let walk = simulate_phase_walk_len(&pair, 5_000_001, target * tau, seed)?;
        let increments: Vec<f64> = walk
            .samples()
            .windows(2)
            .map(|w| wrap_angle(w[1] - w[0]))
            .collect();
        drop(walk);
        let fit = fit_vonmises(&increments)?;
        let rel = (fit.variance_parameter - target).abs() / target;
        let (fast, secs) = within_limit(start, 30.0);
        ok &= rel <= 0.05 && fast;
        parts.push(format!(
            "t/τ̄={target}: fitted {:.4} ({:+.1}%), {secs:.1}s",
            fit.variance_parameter,
            100.0 * (fit.variance_parameter - target) / target
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn photon_arithmetic() -> Check {
    let flux = photon_flux(0.1e-3, 193.4e12)?;
    let per_response = flux * 625e-12;
    let ok =
        ((flux - 7.8e14) / 7.8e14).abs() <= 0.01 && ((per_response - 4.9e5) / 4.9e5).abs() <= 0.02;
    Ok((
        ok,
        format!("flux = {flux:.4e}/s (7.8e14 ± 1%), per 625 ps = {per_response:.4e} (4.9e5 ± 2%)"),
    ))
}

/// Shared end-to-end setup: 156.25 kS/s, `dt/τ̄ = 50`, 0.1 mW per laser.
fn end_to_end_pair() -> Result<(LaserPair, f64)> {
    let dt = 6.4e-6;
    let tau_bar = dt / 50.0;
    let pair = LaserPair::symmetric(4.0 * tau_bar, 4.9e5, TAU * 1e9)?;
    Ok((pair, dt))
}

fn end_to_end(samples: usize, seed: u64) -> Result<crate::pipeline::Extraction> {
    let (pair, dt) = end_to_end_pair()?;
    let walk = simulate_phase_walk_len(&pair, samples, dt, seed)?;
    let trace = simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), seed)?;
    drop(walk);
    extract(&trace, &ExtractionConfig::default())
}

fn end_to_end_autocorrelation() -> Check {
    let start = Instant::now();
    let n = 5_000_000;
    let extraction = end_to_end(n + 2, 6)?;
    let k = autocorrelation(&extraction.increments, 100)?;
    let max_abs = k.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    let std = (k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k.len() - 1) as f64).sqrt();
    let ratio = std * (n as f64).sqrt();
    let (fast, secs) = within_limit(start, 60.0);
    let ok = max_abs < 1e-2 && (0.67..=1.5).contains(&ratio) && fast;
    Ok((
        ok,
        format!("max|K| = {max_abs:.2e} (< 1e-2), std·√N = {ratio:.3} ([0.67, 1.5]), {secs:.1}s"),
    ))
}

fn end_to_end_randomness() -> Check {
    let runs = 100u64;
    let thresholds = Thresholds::default();
    let names = ["monobit", "runs", "chi_square"];
    let mut p_values: [Vec<f64>; 3] = Default::default();
    for r in 0..runs {
        let stream = end_to_end(10_000_002, 7_000 + r)?.stream;
        let reports = [
            monobit_test(&stream, thresholds)?,
            runs_test(&stream, thresholds)?,
            chi_square_symbols(&stream, thresholds)?,
        ];
        for (ps, report) in p_values.iter_mut().zip(&reports) {
            ps.push(report.p_value);
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, ps) in names.iter().zip(&p_values) {
        let passes = ps.iter().filter(|&&p| p >= thresholds.pass).count();
        let (_, meta_p) = ks_test(ps, |x| x.clamp(0.0, 1.0));
        ok &= passes >= 95 && meta_p > 1e-3;
        parts.push(format!("{name} {passes}/{runs} (KS p={meta_p:.3})"));
    }
    Ok((ok, parts.join(", ")))
}

fn pipeline_fidelity() -> Check {
    let dt = 1e-9;
    let tau_bar = dt / 1e-3;
    let pair = LaserPair::symmetric(4.0 * tau_bar, 4.9e5, 0.3 / dt)?;
    let config = DetectorConfig {
        noise_variance_override: Some(0.0),
        ..DetectorConfig::for_pair(&pair)
    };
    let walk = simulate_phase_walk_len(&pair, 100_000, dt, 8)?;
    let trace = simulate_iq_trace(&walk, &pair, &config, 8)?;

    // Q = −A sin φ, so arg(I + iQ) tracks −φ.
    let truth: Vec<f64> = walk
        .samples()
        .iter()
        .enumerate()
        .map(|(n, &x)| -(pair.delta_omega * walk.time(n) + x))
        .collect();
    let truth = PhaseSeries::new(truth, dt, 0.0)?;
    let (expected, _) = detrend(&truth, None)?;
    let (recovered, _) = detrend(&unwrap(&instantaneous_phase(&trace)?), None)?;

    let rms = (expected
        .samples()
        .iter()
        .zip(recovered.samples())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / expected.len() as f64)
        .sqrt();
    let step = trace.quantizer().step();
    let bound = (step / (2f64.sqrt() * pair.amplitude())).asin();
    Ok((
        rms < 2.0 * bound,
        format!("RMS = {rms:.3e} rad (< 2 × {bound:.3e})"),
    ))
}

fn round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000_000 {
        let len = rng.random_range(1..=16);
        let wrapped: Vec<f64> = (0..len)
            .map(|_| wrap_angle(rng.random_range(-PI..=PI)))
            .collect();
        let series = PhaseSeries::new(wrapped, 1.0, 0.0)?;
        for (a, b) in unwrap(&series).samples().iter().zip(series.samples()) {
            worst = worst.max(wrap_angle(wrap_angle(*a) - b).abs());
        }
    }

    let dir = tempfile::tempdir().map_err(|e| crate::error::Error::Io {
        path: std::env::temp_dir(),
        source: e,
    })?;
    let (pair, dt) = end_to_end_pair()?;
    let walk = simulate_phase_walk_len(&pair, 10_000, dt, 9)?;
    let trace = simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), 9)?;
    let trace_path = dir.path().join("trace.pwiq");
    write_trace(&trace, &trace_path)?;
    let back = read_trace(&trace_path)?;
    let trace_ok = back.i_codes() == trace.i_codes()
        && back.q_codes() == trace.q_codes()
        && back.dt() == trace.dt()
        && back.config() == trace.config();

    let stream = extract(&trace, &ExtractionConfig::default())?.stream;
    let bits_path = dir.path().join("bits.bin");
    write_bitstream(&stream, &bits_path, Provenance::default())?;
    let (stream_back, _) = read_bitstream(&bits_path, 8)?;
    let bits_ok = stream_back == stream;

    let ok = worst <= 1e-12 && trace_ok && bits_ok;
    Ok((
        ok,
        format!(
            "wrap∘unwrap max error {worst:.1e} (≤ 1e-12), trace={trace_ok}, bitstream={bits_ok}"
        ),
    ))
}

fn rate_bookkeeping() -> Check {
    let (pair, _) = end_to_end_pair()?;
    let dt = Timebase::from_sample_rate(156.25e3)?;
    let walk = simulate_phase_walk_len(&pair, 1_000, dt.seconds(), 10)?;
    let trace = simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), 10)?;
    let rate = extract(&trace, &ExtractionConfig::default())?
        .stream
        .bit_rate();
    Ok((
        rate == 1.25e6,
        format!("bit rate = {rate} bit/s (exactly 1.25e6)"),
    ))
}

//! Statistical checks on extracted phases and symbols.
//!
//! Every test yields a [`StatReport`] whose verdict depends only on the
//! p-value and the thresholds echoed inside the report. Bit-level tests
//! expand symbols most-significant bit first.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::bitstream::BitStream;
use crate::error::{domain, Error, Result};

pub const MIN_KS_SAMPLES: usize = 100;
pub const MIN_BITS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// p ≥ pass → pass.
    pub pass: f64,
    /// weak ≤ p < pass → weak; below → fail.
    pub weak: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            pass: 0.01,
            weak: 1e-4,
        }
    }
}

impl Thresholds {
    pub fn verdict(&self, p_value: f64) -> Verdict {
        if p_value >= self.pass {
            Verdict::Pass
        } else if p_value >= self.weak {
            Verdict::Weak
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Weak,
    Fail,
    /// The test's entry condition did not hold, so no p-value was computed.
    PrerequisiteFailed,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        matches!(self, Verdict::Fail | Verdict::PrerequisiteFailed)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Weak => "weak",
            Verdict::Fail => "fail",
            Verdict::PrerequisiteFailed => "prerequisite_failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: u64,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
}

impl StatReport {
    fn new(name: &str, statistic: f64, p_value: f64, n: u64, thresholds: Thresholds) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test_name: name.to_owned(),
            statistic,
            p_value,
            n_samples: n,
            verdict: thresholds.verdict(p_value),
            thresholds,
        }
    }
}

/// Lag-`d` autocorrelation coefficients for `d = 1..=max_lag`, normalized
/// by the total sum of squares about the mean so that lag 0 would be 1.
///
/// Each lag is an independent sum accumulated in eight interleaved lanes
/// combined in a fixed order, so the result does not depend on how lags are
/// scheduled.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < max_lag + 2 {
        return Err(Error::InsufficientData {
            needed: max_lag + 2,
            got: n,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let total = lagged_dot(&centred, 0);
    if total == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((1..=max_lag)
        .map(|d| lagged_dot(&centred, d) / total)
        .collect())
}

fn lagged_dot(x: &[f64], lag: usize) -> f64 {
    let a = &x[..x.len() - lag];
    let b = &x[lag..];
    let mut lanes = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (u, v) in ca.zip(cb) {
        for j in 0..8 {
            lanes[j] += u[j] * v[j];
        }
    }
    let mut tail = 0.0;
    for (u, v) in ra.iter().zip(rb) {
        tail += u * v;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

/// Asymptotic Kolmogorov survival function `P(√n·D > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let sum = y + y.powi(9) + y.powi(25) + y.powi(49);
        (1.0 - (TAU.sqrt() / lambda) * sum).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        (2.0 * (x - x.powi(4) + x.powi(9))).clamp(0.0, 1.0)
    }
}

/// Two-sided one-sample KS statistic and asymptotic p-value against `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_sf(n.sqrt() * d))
}

/// KS test of wrapped phases against the uniform law on (−π, π].
pub fn ks_uniform_test(wrapped_phases: &[f64], thresholds: Thresholds) -> Result<StatReport> {
    if wrapped_phases.len() < MIN_KS_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_KS_SAMPLES,
            got: wrapped_phases.len(),
        });
    }
    if let Some(n) = wrapped_phases.iter().position(|&x| !(x > -PI && x <= PI)) {
        return Err(domain(format!(
            "phase {n} ({}) is outside (-pi, pi]",
            wrapped_phases[n]
        )));
    }
    let (d, p) = ks_test(wrapped_phases, |x| (x + PI) / TAU);
    Ok(StatReport::new(
        "ks_uniform",
        d,
        p,
        wrapped_phases.len() as u64,
        thresholds,
    ))
}

/// Frequency (monobit) test: `S = |#1 − #0|/√n`, `p = erfc(S/√2)`.
pub fn monobit_test(bits: &BitStream, thresholds: Thresholds) -> Result<StatReport> {
    let n = require_bits(bits)?;
    let ones = count_ones(bits);
    let s = (2.0 * ones as f64 - n as f64).abs() / (n as f64).sqrt();
    Ok(StatReport::new(
        "monobit",
        s,
        erfc(s / SQRT_2),
        n,
        thresholds,
    ))
}

/// Pearson chi-square of symbol counts against the uniform law over `2^k`
/// symbols, `2^k − 1` degrees of freedom.
pub fn chi_square_symbols(bits: &BitStream, thresholds: Thresholds) -> Result<StatReport> {
    let k = bits.bits_per_symbol();
    let bins = 1usize << k;
    let needed = 10 * bins;
    if bits.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: bits.len(),
        });
    }
    let mut counts = vec![0u64; bins];
    for &s in bits.symbols() {
        counts[s as usize] += 1;
    }
    let expected = bits.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    Ok(StatReport::new(
        "chi_square_symbols",
        stat,
        dist.sf(stat),
        bits.len() as u64,
        thresholds,
    ))
}

/// Total-runs test. Requires `|π − ½| < 2/√n` for the ones fraction `π`;
/// otherwise the report carries a prerequisite-failed verdict and p = 0.
pub fn runs_test(bits: &BitStream, thresholds: Thresholds) -> Result<StatReport> {
    let n = require_bits(bits)?;
    let (words, _) = bits.to_words();
    let ones: u64 = words.iter().map(|w| w.count_ones() as u64).sum();
    let pi = ones as f64 / n as f64;
    let nf = n as f64;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        return Ok(StatReport {
            test_name: "runs".into(),
            statistic: pi,
            p_value: 0.0,
            n_samples: n,
            verdict: Verdict::PrerequisiteFailed,
            thresholds,
        });
    }
    let runs = 1 + transitions(&words, n);
    let v = runs as f64;
    let spread = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * nf * spread).abs() / (2.0 * (2.0 * nf).sqrt() * spread));
    Ok(StatReport::new("runs", v, p, n, thresholds))
}

fn require_bits(bits: &BitStream) -> Result<u64> {
    let n = bits.bit_len();
    if n < MIN_BITS {
        return Err(Error::InsufficientData {
            needed: MIN_BITS as usize,
            got: n as usize,
        });
    }
    Ok(n)
}

fn count_ones(bits: &BitStream) -> u64 {
    bits.symbols().iter().map(|&s| s.count_ones() as u64).sum()
}

/// Number of adjacent unequal bit pairs among the first `n` bits.
fn transitions(words: &[u64], n: u64) -> u64 {
    let pairs = n.saturating_sub(1);
    let mut total = 0u64;
    for (idx, &w) in words.iter().enumerate() {
        let first = idx as u64 * 64;
        if first >= pairs {
            break;
        }
        let next_msb = words.get(idx + 1).map_or(0, |x| x >> 63);
        let x = w ^ ((w << 1) | next_msb);
        let valid = (pairs - first).min(64);
        let mask = if valid == 64 {
            u64::MAX
        } else {
            !(u64::MAX >> valid)
        };
        total += (x & mask).count_ones() as u64;
    }
    total
}

/// Histogram of symbol counts, index = symbol.
pub fn symbol_histogram(bits: &BitStream) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << bits.bits_per_symbol()];
    for &s in bits.symbols() {
        counts[s as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::series::Timebase;

    fn stream(symbols: Vec<u16>, k: u8) -> BitStream {
        BitStream::new(symbols, k, Timebase::from_femtoseconds(1).unwrap()).unwrap()
    }

    fn random_stream(seed: u64, n: usize) -> BitStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        stream((0..n).map(|_| rng.random::<u8>() as u16).collect(), 8)
    }

    #[test]
    fn verdict_thresholds() {
        let t = Thresholds::default();
        assert_eq!(t.verdict(0.5), Verdict::Pass);
        assert_eq!(t.verdict(0.01), Verdict::Pass);
        assert_eq!(t.verdict(0.005), Verdict::Weak);
        assert_eq!(t.verdict(1e-4), Verdict::Weak);
        assert_eq!(t.verdict(9e-5), Verdict::Fail);
    }

    #[test]
    fn alternating_series_lag_one() {
        let n = 10_000;
        let x: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let k = autocorrelation(&x, 3).unwrap();
        // mean 0, Σx² = N, lag-1 sum = −(N−1)
        assert!((k[0] + (n as f64 - 1.0) / n as f64).abs() < 1e-12);
        assert!((k[1] - (n as f64 - 2.0) / n as f64).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_matches_naive_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1003).map(|_| rng.random::<f64>()).collect();
        let k = autocorrelation(&x, 20).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        for d in 1..=20 {
            let num: f64 = (0..x.len() - d)
                .map(|i| (x[i] - mean) * (x[i + d] - mean))
                .sum();
            assert!((k[d - 1] - num / var).abs() < 1e-13);
        }
    }

    #[test]
    fn autocorrelation_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| -3.5 * v + 12.0).collect();
        let kx = autocorrelation(&x, 50).unwrap();
        let ky = autocorrelation(&y, 50).unwrap();
        for (a, b) in kx.iter().zip(&ky) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn autocorrelation_errors() {
        assert!(matches!(
            autocorrelation(&[1.0; 50], 5),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(
            autocorrelation(&[1.0, 2.0, 3.0], 2),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // scipy.special.kolmogorov
        assert!((kolmogorov_sf(0.5) - 0.963_945_243_664_875_1).abs() < 1e-9);
        assert!((kolmogorov_sf(1.0) - 0.269_999_671_677_354_6).abs() < 1e-9);
        assert!((kolmogorov_sf(1.5) - 0.022_217_962_616_525_13).abs() < 1e-9);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_evenly_spaced_fits() {
        let n = 100_000;
        let delta = TAU / n as f64;
        let x: Vec<f64> = (0..n).map(|j| -PI + (j as f64 + 0.5) * delta).collect();
        let r = ks_uniform_test(&x, Thresholds::default()).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-9);
        assert!(r.p_value > 0.95);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn ks_single_bin_fails() {
        let x = vec![0.01; 1000];
        let r = ks_uniform_test(&x, Thresholds::default()).unwrap();
        assert!(r.p_value < 1e-10);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(ks_uniform_test(&x[..99], Thresholds::default()).is_err());
        assert!(ks_uniform_test(&vec![4.0; 200], Thresholds::default()).is_err());
    }

    #[test]
    fn monobit_extremes() {
        let zeros = stream(vec![0; 100], 8);
        let r = monobit_test(&zeros, Thresholds::default()).unwrap();
        assert!(r.p_value < 1e-100);
        assert_eq!(r.verdict, Verdict::Fail);
        let alt = stream(vec![0xAA; 100], 8);
        let r = monobit_test(&alt, Thresholds::default()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(monobit_test(&stream(vec![0; 12], 8), Thresholds::default()).is_err());
    }

    #[test]
    fn monobit_nist_example() {
        // SP 800-22 §2.1.8: 100-bit ε from the digits of e → p = 0.109599
        let eps = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
        let s: Vec<u16> = eps.bytes().map(|b| (b - b'0') as u16).collect();
        let r = monobit_test(&stream(s, 1), Thresholds::default()).unwrap();
        assert!((r.p_value - 0.109_599).abs() < 1e-6);
    }

    #[test]
    fn runs_nist_example() {
        // SP 800-22 §2.3.8: same ε → p = 0.500798
        let eps = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
        let s: Vec<u16> = eps.bytes().map(|b| (b - b'0') as u16).collect();
        let r = runs_test(&stream(s, 1), Thresholds::default()).unwrap();
        assert!((r.p_value - 0.500_798).abs() < 1e-6, "{}", r.p_value);
    }

    #[test]
    fn runs_extremes() {
        let alt = stream(vec![0xAA; 1000], 8);
        let r = runs_test(&alt, Thresholds::default()).unwrap();
        assert_eq!(r.statistic, 8000.0);
        assert!(r.p_value < 1e-100);
        let same = stream(vec![0xFF; 1000], 8);
        let r = runs_test(&same, Thresholds::default()).unwrap();
        assert_eq!(r.verdict, Verdict::PrerequisiteFailed);
    }

    #[test]
    fn transitions_match_bitwise_count() {
        for len in [13usize, 64, 65, 200] {
            let s = random_stream(len as u64, len);
            let bits: Vec<bool> = s.bits().collect();
            let naive = bits.windows(2).filter(|w| w[0] != w[1]).count() as u64;
            let (words, n) = s.to_words();
            assert_eq!(transitions(&words, n), naive);
        }
        let s = stream((0..77).map(|x| (x * 5 % 8) as u16).collect(), 3);
        let bits: Vec<bool> = s.bits().collect();
        let naive = bits.windows(2).filter(|w| w[0] != w[1]).count() as u64;
        let (words, n) = s.to_words();
        assert_eq!(transitions(&words, n), naive);
    }

    #[test]
    fn chi_square_extremes() {
        let even = stream((0..2560).map(|i| (i % 256) as u16).collect(), 8);
        let r = chi_square_symbols(&even, Thresholds::default()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let one = stream(vec![7; 2560], 8);
        let r = chi_square_symbols(&one, Thresholds::default()).unwrap();
        assert!(r.p_value < 1e-100);
        assert!(chi_square_symbols(&stream(vec![0; 2559], 8), Thresholds::default()).is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let s = random_stream(5, 50_000);
        let t = Thresholds::default();
        assert_eq!(monobit_test(&s, t).unwrap(), monobit_test(&s, t).unwrap());
        assert_eq!(runs_test(&s, t).unwrap(), runs_test(&s, t).unwrap());
        assert_eq!(
            chi_square_symbols(&s, t).unwrap(),
            chi_square_symbols(&s, t).unwrap()
        );
    }

    #[test]
    fn p_values_are_calibrated_on_uniform_input() {
        let t = Thresholds::default();
        let mut mono = Vec::new();
        let mut runs = Vec::new();
        let mut chi = Vec::new();
        let mut ks = Vec::new();
        for seed in 0..1000 {
            let s = random_stream(10_000 + seed, 10_000);
            mono.push(monobit_test(&s, t).unwrap().p_value);
            runs.push(runs_test(&s, t).unwrap().p_value);
            chi.push(chi_square_symbols(&s, t).unwrap().p_value);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases: Vec<f64> = (0..1000).map(|_| PI - TAU * rng.random::<f64>()).collect();
            ks.push(ks_uniform_test(&phases, t).unwrap().p_value);
        }
        for (name, p) in [("monobit", mono), ("runs", runs), ("chi", chi), ("ks", ks)] {
            let (_, meta) = ks_test(&p, |x| x.clamp(0.0, 1.0));
            assert!(meta > 0.001, "{name}: p-value uniformity {meta}");
        }
    }
}

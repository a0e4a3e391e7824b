use std::f64::consts::TAU;

use phaseqrng::io::TraceReader;
use phaseqrng::{
    chi_square_symbols, extract, monobit_test, read_trace, runs_test, simulate_iq_trace,
    simulate_phase_walk_len, write_trace, DetectorConfig, ExtractionConfig, LaserPair,
    StreamingExtractor, Thresholds, Verdict,
};

fn pair() -> (LaserPair, f64) {
    let dt = 6.4e-6;
    (
        LaserPair::symmetric(4.0 * dt / 50.0, 4.9e5, TAU * 1e9).unwrap(),
        dt,
    )
}

// An 8-bit readout leaves the ADC's square lattice visible in the phase
// histogram; at 12 bits the lattice is fine enough that 10^7 symbols look
// uniform to every bit-level test.
#[test]
fn twelve_bit_readout_passes_bit_tests() {
    let (pair, dt) = pair();
    let config = DetectorConfig {
        adc_bits: 12,
        ..DetectorConfig::for_pair(&pair)
    };
    for seed in [1, 2] {
        let walk = simulate_phase_walk_len(&pair, 10_000_002, dt, seed).unwrap();
        let trace = simulate_iq_trace(&walk, &pair, &config, seed).unwrap();
        drop(walk);
        let stream = extract(&trace, &ExtractionConfig::default())
            .unwrap()
            .stream;
        assert_eq!(stream.len(), 10_000_000);
        let th = Thresholds::default();
        for report in [
            monobit_test(&stream, th).unwrap(),
            runs_test(&stream, th).unwrap(),
            chi_square_symbols(&stream, th).unwrap(),
        ] {
            assert_eq!(report.verdict, Verdict::Pass, "seed {seed}: {report:?}");
        }
    }
}

#[test]
fn streaming_a_trace_file_matches_whole_extraction() {
    let (pair, dt) = pair();
    let walk = simulate_phase_walk_len(&pair, 50_000, dt, 3).unwrap();
    let trace = simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.pwiq");
    write_trace(&trace, &path).unwrap();

    for chunk in [None, Some(1000), Some(4099)] {
        let config = ExtractionConfig {
            chunk,
            ..ExtractionConfig::default()
        };
        let whole = extract(&read_trace(&path).unwrap(), &config).unwrap();
        let mut reader = TraceReader::open(&path).unwrap();
        let mut streaming = StreamingExtractor::new(config, reader.dt()).unwrap();
        loop {
            let (i, q) = reader.read_chunk(777).unwrap();
            if i.is_empty() {
                break;
            }
            streaming.push(&i, &q).unwrap();
        }
        let streamed = streaming.finish().unwrap();
        assert_eq!(streamed.stream, whole.stream, "chunk {chunk:?}");
        assert_eq!(streamed.delta_omega, whole.delta_omega);
        if let Some(c) = chunk {
            assert_eq!(whole.delta_omega.len(), 49_999usize.div_ceil(c));
        }
    }
}

#[test]
fn known_carrier_is_reported_back() {
    let (pair, dt) = pair();
    let walk = simulate_phase_walk_len(&pair, 1000, dt, 4).unwrap();
    let trace = simulate_iq_trace(&walk, &pair, &DetectorConfig::for_pair(&pair), 4).unwrap();
    let config = ExtractionConfig {
        delta_omega_estimate: Some(123.0),
        ..ExtractionConfig::default()
    };
    let out = extract(&trace, &config).unwrap();
    assert_eq!(out.delta_omega, vec![123.0]);
    assert_eq!(out.stream.len(), 998);
}

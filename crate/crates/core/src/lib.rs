//! Phase-noise random number generation from two free-running lasers.
//!
//! The crate simulates the laser phase random walk and the balanced I/Q
//! detector that reads it out ([`sim`]), turns quantized I/Q traces back into
//! uniformly distributed phase symbols ([`pipeline`]), models the wrapped
//! increments with a von Mises law ([`vonmises`]) and validates the output
//! statistically ([`stats`]). [`io`] holds the on-disk formats and
//! [`acceptance`] the end-to-end checks run by `phaseqrng selftest`.

pub mod acceptance;
pub mod bessel;
pub mod bitstream;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod quadrature;
pub mod quantizer;
pub mod regime;
pub mod series;
pub mod sim;
pub mod stats;
pub mod vonmises;

pub use bessel::{bessel_i0, bessel_ratio_i1_i0, ln_bessel_i0};
pub use bitstream::BitStream;
pub use error::{Error, Result};
pub use io::{
    read_bitstream, read_csv_trace, read_trace, write_bitstream, write_reports, write_trace,
    BitstreamMetadata, Provenance, TraceFileHeader,
};
pub use pipeline::{
    detrend, discretize, extract, extract_bits, instantaneous_phase, phase_increments, unwrap,
    Extraction, ExtractionConfig, StreamingExtractor,
};
pub use quantizer::Quantizer;
pub use regime::{check_regime, RegimeCheck};
pub use series::{wrap_angle, PhaseSeries, Timebase};
pub use sim::{
    effective_coherence_time, photon_flux, simulate_iq_trace, simulate_phase_walk,
    simulate_phase_walk_len, DetectorConfig, IQTrace, LaserPair,
};
pub use stats::{
    autocorrelation, chi_square_symbols, ks_uniform_test, monobit_test, runs_test, StatReport,
    Thresholds, Verdict,
};
pub use vonmises::{
    discretized_probs, fit_vonmises, max_uniform_deviation, VonMisesFit, VonMisesModel,
};

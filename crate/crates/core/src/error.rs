use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value would not be representable as a finite `f64`.
    #[error("range error: {0}")]
    Range(String),

    /// `arg(I + iQ)` is undefined because both quadratures are zero.
    #[error("degenerate sample at index {index}: I = Q = 0")]
    DegenerateSample { index: usize },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Mean resultant length is so close to 1 that the concentration diverges.
    #[error("unbounded concentration: mean resultant length {0} is too close to 1")]
    UnboundedConcentration(f64),

    #[error("constant series has zero variance")]
    DegenerateVariance,

    #[error("{path}: bad magic {found:?}, expected \"PWIQ\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u8 },

    #[error("{path}: truncated at byte offset {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("{path}: byte offset {offset}: {message}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: line {line}: non-uniform timebase ({deviation_ppm:.3} ppm off the inferred interval)")]
    Timebase {
        path: PathBuf,
        line: usize,
        deviation_ppm: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: invalid metadata: {source}")]
    Metadata {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

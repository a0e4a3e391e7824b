//! File formats.
//!
//! * Trace files (`PWIQ`): a 22-byte little-endian header followed by
//!   interleaved signed ADC codes `I₀ Q₀ I₁ Q₁ …`, one byte per code for
//!   depths up to 8 bits and two bytes (LE) above.
//!
//!   | offset | size | field                 |
//!   |--------|------|-----------------------|
//!   | 0      | 4    | magic `"PWIQ"`        |
//!   | 4      | 1    | version (1)           |
//!   | 5      | 1    | ADC bits              |
//!   | 6      | 8    | dt in femtoseconds    |
//!   | 14     | 8    | sample count (pairs)  |
//!
//!   Detector calibration that the header does not carry lives in a JSON
//!   sidecar next to the trace (`<file>.json`).
//! * CSV traces with a `t,i,q` header; `i` and `q` are integer ADC codes.
//! * Raw bitstreams: symbols packed MSB-first with no header, plus a JSON
//!   metadata sidecar.
//! * Reports: one JSON object per line.
//!
//! All writes go to a temporary file in the destination directory that is
//! renamed into place.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bitstream::BitStream;
use crate::error::{domain, Error, Result};
use crate::quantizer::Quantizer;
use crate::series::Timebase;
use crate::sim::{DetectorConfig, IQTrace};
use crate::stats::StatReport;

pub const TRACE_MAGIC: [u8; 4] = *b"PWIQ";
pub const TRACE_VERSION: u8 = 1;
pub const TRACE_HEADER_LEN: usize = 22;

/// Maximum relative deviation of a CSV sample interval from the first one.
pub const CSV_TIMEBASE_TOLERANCE: f64 = 1e-6;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Sidecar path for `path`: the same name with `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write_with(path, |w| w.write_all(bytes))
}

fn atomic_write_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e.error,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Metadata {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| Error::Metadata {
                path: path.to_owned(),
                source,
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceFileHeader {
    pub magic: [u8; 4],
    pub version: u8,
    pub adc_bits: u8,
    pub dt_femtoseconds: u64,
    pub sample_count: u64,
}

impl TraceFileHeader {
    pub fn for_trace(trace: &IQTrace) -> Self {
        Self {
            magic: TRACE_MAGIC,
            version: TRACE_VERSION,
            adc_bits: trace.config().adc_bits,
            dt_femtoseconds: trace.dt().femtoseconds(),
            sample_count: trace.len() as u64,
        }
    }

    pub fn to_bytes(&self) -> [u8; TRACE_HEADER_LEN] {
        let mut out = [0u8; TRACE_HEADER_LEN];
        out[0..4].copy_from_slice(&self.magic);
        out[4] = self.version;
        out[5] = self.adc_bits;
        out[6..14].copy_from_slice(&self.dt_femtoseconds.to_le_bytes());
        out[14..22].copy_from_slice(&self.sample_count.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; TRACE_HEADER_LEN]) -> Self {
        Self {
            magic: bytes[0..4].try_into().expect("4 bytes"),
            version: bytes[4],
            adc_bits: bytes[5],
            dt_femtoseconds: u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")),
            sample_count: u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes")),
        }
    }

    /// Bytes per stored code.
    pub fn code_width(&self) -> usize {
        (self.adc_bits as usize).div_ceil(8)
    }

    pub fn payload_len(&self) -> Option<u64> {
        self.sample_count.checked_mul(2 * self.code_width() as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct TraceSidecar {
    detector: DetectorConfig,
    saturated: bool,
}

/// Writes the trace file and its detector sidecar.
pub fn write_trace(trace: &IQTrace, path: &Path) -> Result<()> {
    let header = TraceFileHeader::for_trace(trace);
    let width = header.code_width();
    atomic_write_with(path, |w| {
        w.write_all(&header.to_bytes())?;
        let mut buf = Vec::with_capacity(64 * 1024);
        for (&i, &q) in trace.i_codes().iter().zip(trace.q_codes()) {
            if width == 1 {
                buf.push(i as i8 as u8);
                buf.push(q as i8 as u8);
            } else {
                buf.extend_from_slice(&i.to_le_bytes());
                buf.extend_from_slice(&q.to_le_bytes());
            }
            if buf.len() >= 60 * 1024 {
                w.write_all(&buf)?;
                buf.clear();
            }
        }
        w.write_all(&buf)
    })?;
    write_json(
        &sidecar_path(path),
        &TraceSidecar {
            detector: *trace.config(),
            saturated: trace.saturated(),
        },
    )
}

/// Sequential reader over a trace file, yielding the payload in chunks.
pub struct TraceReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: TraceFileHeader,
    config: DetectorConfig,
    saturated: bool,
    quantizer: Quantizer,
    remaining: u64,
    offset: u64,
}

impl TraceReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let file_len = file.metadata().map_err(io_err(path))?.len();
        let mut reader = BufReader::with_capacity(1 << 16, file);
        let mut raw = [0u8; TRACE_HEADER_LEN];
        let available = TRACE_HEADER_LEN.min(file_len as usize);
        reader
            .read_exact(&mut raw[..available])
            .map_err(io_err(path))?;
        if available >= 4 && raw[0..4] != TRACE_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_owned(),
                found: raw[0..4].try_into().expect("4 bytes"),
            });
        }
        if available < TRACE_HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_owned(),
                offset: file_len,
                expected: TRACE_HEADER_LEN as u64,
                found: file_len,
            });
        }
        let header = TraceFileHeader::from_bytes(&raw);
        if header.version != TRACE_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_owned(),
                version: header.version,
            });
        }
        let corrupt = |offset: u64, message: String| Error::Corrupt {
            path: path.to_owned(),
            offset,
            message,
        };
        if !(1..=16).contains(&header.adc_bits) {
            return Err(corrupt(
                5,
                format!("ADC depth {} outside 1..=16", header.adc_bits),
            ));
        }
        if header.dt_femtoseconds == 0 {
            return Err(corrupt(6, "zero sample interval".into()));
        }
        let payload = header
            .payload_len()
            .ok_or_else(|| corrupt(14, "sample count overflows".into()))?;
        let expected = TRACE_HEADER_LEN as u64 + payload;
        if file_len < expected {
            return Err(Error::Truncated {
                path: path.to_owned(),
                offset: file_len,
                expected,
                found: file_len,
            });
        }
        if file_len > expected {
            return Err(corrupt(
                expected,
                format!("{} trailing bytes after payload", file_len - expected),
            ));
        }
        let (config, saturated) = match read_json::<TraceSidecar>(&sidecar_path(path))? {
            Some(side) if side.detector.adc_bits == header.adc_bits => {
                (side.detector, side.saturated)
            }
            Some(side) => {
                return Err(corrupt(
                    5,
                    format!(
                        "header says {} ADC bits, sidecar says {}",
                        header.adc_bits, side.detector.adc_bits
                    ),
                ))
            }
            None => (DetectorConfig::code_units(header.adc_bits), false),
        };
        config.validate()?;
        let quantizer = config.quantizer()?;
        Ok(Self {
            path: path.to_owned(),
            reader,
            header,
            config,
            saturated,
            quantizer,
            remaining: header.sample_count,
            offset: TRACE_HEADER_LEN as u64,
        })
    }

    pub fn header(&self) -> &TraceFileHeader {
        &self.header
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn dt(&self) -> Timebase {
        Timebase::from_femtoseconds(self.header.dt_femtoseconds).expect("checked at open")
    }

    /// Reads up to `max` sample pairs; empty once the payload is exhausted.
    pub fn read_chunk(&mut self, max: usize) -> Result<(Vec<i16>, Vec<i16>)> {
        let n = (max as u64).min(self.remaining) as usize;
        let width = self.header.code_width();
        let mut raw = vec![0u8; n * 2 * width];
        self.reader
            .read_exact(&mut raw)
            .map_err(io_err(&self.path))?;
        let mut i = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for (k, pair) in raw.chunks_exact(2 * width).enumerate() {
            let (a, b) = if width == 1 {
                (pair[0] as i8 as i16, pair[1] as i8 as i16)
            } else {
                (
                    i16::from_le_bytes([pair[0], pair[1]]),
                    i16::from_le_bytes([pair[2], pair[3]]),
                )
            };
            for (j, code) in [a, b].into_iter().enumerate() {
                if !self.quantizer.contains_code(code) {
                    return Err(Error::Corrupt {
                        path: self.path.clone(),
                        offset: self.offset + ((2 * k + j) * width) as u64,
                        message: format!(
                            "code {code} outside the {}-bit codebook",
                            self.header.adc_bits
                        ),
                    });
                }
            }
            i.push(a);
            q.push(b);
        }
        self.offset += raw.len() as u64;
        self.remaining -= n as u64;
        Ok((i, q))
    }

    pub fn read_all(mut self) -> Result<IQTrace> {
        let (i, q) = self.read_chunk(self.remaining as usize)?;
        IQTrace::new(i, q, self.dt(), self.config, self.saturated)
    }
}

pub fn read_trace(path: &Path) -> Result<IQTrace> {
    TraceReader::open(path)?.read_all()
}

/// Imports a `t,i,q` CSV of integer ADC codes. The sample interval is taken
/// from the first two rows and every later interval must agree within 1 ppm.
pub fn read_csv_trace(path: &Path, adc_bits: u8) -> Result<IQTrace> {
    let config = DetectorConfig::code_units(adc_bits);
    config.validate()?;
    let quantizer = config.quantizer()?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_owned(),
        line: line as usize,
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if names != ["t", "i", "q"] {
        return Err(parse_err(
            1,
            format!("expected header t,i,q, found {}", names.join(",")),
        ));
    }

    let mut times = Vec::new();
    let mut i = Vec::new();
    let mut q = Vec::new();
    let mut dt: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let t: f64 = field(0)
            .parse()
            .map_err(|_| parse_err(line, format!("bad time {:?}", field(0))))?;
        let code = |idx: usize, name: &str| -> Result<i16> {
            let v: i64 = field(idx)
                .parse()
                .map_err(|_| parse_err(line, format!("bad {name} code {:?}", field(idx))))?;
            i16::try_from(v)
                .ok()
                .filter(|&c| quantizer.contains_code(c))
                .ok_or_else(|| {
                    parse_err(
                        line,
                        format!("{name} code {v} outside the {adc_bits}-bit codebook"),
                    )
                })
        };
        let (a, b) = (code(1, "i")?, code(2, "q")?);
        if let Some(&prev) = times.last() {
            let step: f64 = t - prev;
            match dt {
                None => {
                    if step.is_nan() || step <= 0.0 {
                        return Err(parse_err(line, "timestamps must increase".into()));
                    }
                    dt = Some(step);
                }
                Some(d) => {
                    let deviation = ((step - d) / d).abs();
                    if deviation.is_nan() || deviation > CSV_TIMEBASE_TOLERANCE {
                        return Err(Error::Timebase {
                            path: path.to_owned(),
                            line: line as usize,
                            deviation_ppm: deviation * 1e6,
                        });
                    }
                }
            }
        }
        times.push(t);
        i.push(a);
        q.push(b);
    }
    let dt = dt.ok_or_else(|| parse_err(1, "need at least two rows to infer dt".into()))?;
    IQTrace::new(i, q, Timebase::from_seconds(dt)?, config, false)
}

/// Where a bitstream came from; recorded in its sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Detrend block length, `None` for global detrending.
    pub chunk: Option<usize>,
    /// Mean carrier offset subtracted during detrending, rad/s.
    pub delta_omega: Option<f64>,
    pub detrend_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitstreamMetadata {
    pub bits_per_symbol: u8,
    pub symbol_count: u64,
    pub bit_order: String,
    pub dt_seconds: f64,
    pub dt_femtoseconds: u64,
    pub sample_rate_hz: f64,
    pub bit_rate_bps: f64,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl BitstreamMetadata {
    pub fn for_stream(stream: &BitStream, provenance: Provenance) -> Self {
        let dt = stream.source_dt();
        Self {
            bits_per_symbol: stream.bits_per_symbol(),
            symbol_count: stream.len() as u64,
            bit_order: "msb_first".into(),
            dt_seconds: dt.seconds(),
            dt_femtoseconds: dt.femtoseconds(),
            sample_rate_hz: dt.sample_rate(),
            bit_rate_bps: stream.bit_rate(),
            provenance,
        }
    }
}

/// Writes the raw packed symbols and the metadata sidecar.
pub fn write_bitstream(
    stream: &BitStream,
    path: &Path,
    provenance: Provenance,
) -> Result<BitstreamMetadata> {
    if stream.is_empty() {
        return Err(domain("refusing to write an empty bitstream"));
    }
    atomic_write(path, &stream.to_packed_bytes())?;
    let meta = BitstreamMetadata::for_stream(stream, provenance);
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

/// Reads a raw bitstream. Without a sidecar every whole `default_bits`-bit
/// group becomes a symbol and the sample interval is taken as one second.
pub fn read_bitstream(
    path: &Path,
    default_bits: u8,
) -> Result<(BitStream, Option<BitstreamMetadata>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let meta = read_json::<BitstreamMetadata>(&sidecar_path(path))?;
    let (k, count, dt) = match &meta {
        Some(m) => (
            m.bits_per_symbol,
            m.symbol_count as usize,
            Timebase::from_femtoseconds(m.dt_femtoseconds)?,
        ),
        None => {
            if !(1..=16).contains(&default_bits) {
                return Err(domain(format!(
                    "bits per symbol must be 1..=16, got {default_bits}"
                )));
            }
            let count = (bytes.len() as u64 * 8 / default_bits as u64) as usize;
            (default_bits, count, Timebase::from_seconds(1.0)?)
        }
    };
    let needed = (count as u64 * k as u64).div_ceil(8);
    if (bytes.len() as u64) < needed {
        return Err(Error::Truncated {
            path: path.to_owned(),
            offset: bytes.len() as u64,
            expected: needed,
            found: bytes.len() as u64,
        });
    }
    let stream = BitStream::from_packed_bytes(&bytes, k, count, dt)?;
    Ok((stream, meta))
}

/// One JSON record per line.
pub fn write_reports(reports: &[StatReport], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&serde_json::to_string(r).map_err(|source| Error::Metadata {
            path: path.to_owned(),
            source,
        })?);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

pub fn read_reports(path: &Path) -> Result<Vec<StatReport>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Metadata {
                path: path.to_owned(),
                source,
            })
        })
        .collect()
}

/// `symbol,bin_low,bin_high,count` rows; bin edges in radians.
pub fn write_histogram_csv(counts: &[u64], path: &Path) -> Result<()> {
    let delta = std::f64::consts::TAU / counts.len() as f64;
    let mut text = String::from("symbol,bin_low,bin_high,count\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = -std::f64::consts::PI + i as f64 * delta;
        text.push_str(&format!("{i},{lo},{},{c}\n", lo + delta));
    }
    atomic_write(path, text.as_bytes())
}

/// `lag,coefficient` rows starting at lag 1.
pub fn write_autocorrelation_csv(coefficients: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("lag,coefficient\n");
    for (d, k) in coefficients.iter().enumerate() {
        text.push_str(&format!("{},{k}\n", d + 1));
    }
    atomic_write(path, text.as_bytes())
}

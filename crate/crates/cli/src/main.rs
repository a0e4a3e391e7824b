use std::f64::consts::TAU;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use phaseqrng::io::{
    read_bitstream, read_csv_trace, write_autocorrelation_csv, write_bitstream,
    write_histogram_csv, write_reports, write_trace, Provenance, TraceReader, TRACE_MAGIC,
};
use phaseqrng::pipeline::{extract, Extraction, ExtractionConfig, StreamingExtractor};
use phaseqrng::sim::{
    dbm_to_watts, photon_flux, simulate_iq_trace, simulate_phase_walk, DetectorConfig, LaserPair,
    DEFAULT_RESPONSE_TIME,
};
use phaseqrng::stats::{
    autocorrelation, chi_square_symbols, ks_uniform_test, monobit_test, runs_test,
    symbol_histogram, StatReport, Thresholds,
};
use phaseqrng::{acceptance, check_regime, BitStream, Error, Timebase};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_ANALYSIS: u8 = 3;

/// Sample pairs read per chunk when streaming a trace file.
const READ_CHUNK: usize = 1 << 20;

#[derive(Parser, Debug)]
#[command(
    name = "phaseqrng",
    version,
    about = "Phase-noise QRNG simulator and extractor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a two-laser I/Q trace and write it to a trace file.
    Simulate(SimulateArgs),
    /// Turn a trace (PWIQ or CSV) into a raw bitstream plus metadata sidecar.
    Extract(ExtractArgs),
    /// Run statistical tests on a trace or a bitstream.
    Analyze(AnalyzeArgs),
    /// Run the acceptance criteria.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Coherence time of laser 1, seconds.
    #[arg(long)]
    tau_c1: f64,
    /// Coherence time of laser 2, seconds.
    #[arg(long)]
    tau_c2: f64,
    /// Beat frequency between the lasers, Hz.
    #[arg(long, default_value_t = 1e9)]
    delta_f: f64,
    /// Optical power per laser, dBm.
    #[arg(long, conflicts_with = "intensity", allow_negative_numbers = true)]
    power_dbm: Option<f64>,
    /// Photons per detector response time, per laser.
    #[arg(long)]
    intensity: Option<f64>,
    /// Optical carrier frequency used with --power-dbm, Hz.
    #[arg(long, default_value_t = 193.4e12)]
    carrier_frequency: f64,
    /// Detector response time, seconds.
    #[arg(long, default_value_t = DEFAULT_RESPONSE_TIME)]
    response_time: f64,
    /// Trace duration, seconds.
    #[arg(long)]
    duration: f64,
    /// Samples per second.
    #[arg(long, default_value_t = 156.25e3)]
    sample_rate: f64,
    #[arg(long, default_value_t = 8)]
    adc_bits: u8,
    /// ADC clipping level in detector units [default: 1.2 × carrier amplitude].
    #[arg(long)]
    full_scale: Option<f64>,
    /// Per-quadrature noise variance replacing the shot-noise value.
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bits per output symbol.
    #[arg(long, default_value_t = 8)]
    bits: u8,
    /// Detrend block length in samples; global detrend when omitted.
    #[arg(long)]
    chunk: Option<usize>,
    /// Known beat frequency, Hz; estimated from the data when omitted.
    #[arg(long)]
    delta_f: Option<f64>,
    /// ADC depth of CSV input (PWIQ files carry their own).
    #[arg(long, default_value_t = 8)]
    adc_bits: u8,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Trace file (PWIQ or .csv) or raw bitstream.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated: monobit, runs, chi2, ks, autocorr, or all.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    tests: Vec<TestName>,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    /// Report file (one JSON record per test); printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Symbol-count CSV [default: <report>.histogram.csv].
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Autocorrelation CSV [default: <report>.autocorrelation.csv].
    #[arg(long)]
    autocorr_out: Option<PathBuf>,
    /// Bits per symbol: extraction depth for traces, and symbol width for
    /// bitstreams without a sidecar.
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, default_value_t = 8)]
    adc_bits: u8,
    #[arg(long, default_value_t = 0.01)]
    pass_threshold: f64,
    #[arg(long, default_value_t = 1e-4)]
    weak_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum TestName {
    Monobit,
    Runs,
    Chi2,
    Ks,
    Autocorr,
    All,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Comma-separated criterion numbers; all when omitted.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) | Error::Range(_) => EXIT_USAGE,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Corrupt { .. }
            | Error::Parse { .. }
            | Error::Timebase { .. }
            | Error::Metadata { .. } => EXIT_IO,
            _ => EXIT_ANALYSIS,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Extract(args) => extract_cmd(args),
        Command::Analyze(args) => analyze(args),
        Command::Selftest(args) => selftest(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn echo(config: serde_json::Value) {
    eprintln!("{config}");
}

fn simulate(args: SimulateArgs) -> Outcome {
    if !(args.duration.is_finite() && args.duration > 0.0) {
        return Err(usage(format!(
            "--duration must be positive, got {}",
            args.duration
        )));
    }
    if !(args.sample_rate.is_finite() && args.sample_rate > 0.0) {
        return Err(usage(format!(
            "--sample-rate must be positive, got {}",
            args.sample_rate
        )));
    }
    let intensity = match (args.power_dbm, args.intensity) {
        (Some(dbm), _) => {
            photon_flux(dbm_to_watts(dbm), args.carrier_frequency)? * args.response_time
        }
        (None, Some(i)) => i,
        (None, None) => 4.9e5,
    };
    let pair = LaserPair::new(
        args.tau_c1,
        args.tau_c2,
        intensity,
        intensity,
        TAU * args.delta_f,
    )?;
    let mut config = DetectorConfig::for_pair(&pair);
    config.adc_bits = args.adc_bits;
    config.response_time = args.response_time;
    if let Some(fs) = args.full_scale {
        config.full_scale = fs;
    }
    config.noise_variance_override = args.noise_variance;
    config.validate()?;

    let dt = Timebase::from_sample_rate(args.sample_rate)?;
    echo(json!({
        "command": "simulate",
        "tau_c1": args.tau_c1,
        "tau_c2": args.tau_c2,
        "delta_f": args.delta_f,
        "intensity": intensity,
        "power_dbm": args.power_dbm,
        "carrier_frequency": args.carrier_frequency,
        "duration": args.duration,
        "sample_rate": dt.sample_rate(),
        "dt_femtoseconds": dt.femtoseconds(),
        "detector": config,
        "seed": args.seed,
        "out": args.out,
    }));
    let regime = check_regime(dt.seconds(), args.response_time, args.tau_c1, args.tau_c2)?;
    for advisory in regime.advisories() {
        eprintln!("advisory: {advisory}");
    }

    let walk = simulate_phase_walk(&pair, args.duration, dt.seconds(), args.seed)?;
    let trace = simulate_iq_trace(&walk, &pair, &config, args.seed)?;
    drop(walk);
    if trace.saturated() {
        eprintln!("warning: full scale is below the carrier amplitude; the ADC clips");
    }
    write_trace(&trace, &args.out)?;
    println!("wrote {} samples to {}", trace.len(), args.out.display());
    Ok(0)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn has_trace_magic(path: &Path) -> Result<bool, Failure> {
    let mut magic = [0u8; 4];
    let mut file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut filled = 0;
    while filled < magic.len() {
        match file.read(&mut magic[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(source) => {
                return Err(Error::Io {
                    path: path.to_owned(),
                    source,
                }
                .into())
            }
        }
    }
    Ok(filled == magic.len() && magic == TRACE_MAGIC)
}

/// Extracts a PWIQ file chunk by chunk, or a CSV file in one go.
fn extract_file(
    path: &Path,
    config: ExtractionConfig,
    adc_bits: u8,
) -> Result<Extraction, Failure> {
    if is_csv(path) {
        let trace = read_csv_trace(path, adc_bits)?;
        return Ok(extract(&trace, &config)?);
    }
    let mut reader = TraceReader::open(path)?;
    if reader.saturated() {
        eprintln!(
            "warning: {} was recorded with a clipping ADC",
            path.display()
        );
    }
    let mut extractor = StreamingExtractor::new(config, reader.dt())?;
    loop {
        let (i, q) = reader.read_chunk(READ_CHUNK)?;
        if i.is_empty() {
            break;
        }
        extractor.push(&i, &q)?;
    }
    Ok(extractor.finish()?)
}

fn extract_cmd(args: ExtractArgs) -> Outcome {
    let config = ExtractionConfig {
        out_bits: args.bits,
        delta_omega_estimate: args.delta_f.map(|f| TAU * f),
        chunk: args.chunk,
    };
    config.validate()?;
    echo(json!({
        "command": "extract",
        "in": args.input,
        "out": args.out,
        "extraction": config,
        "adc_bits": args.adc_bits,
    }));
    let extraction = extract_file(&args.input, config, args.adc_bits)?;
    let provenance = Provenance {
        source: args.input.display().to_string(),
        chunk: args.chunk,
        delta_omega: Some(extraction.mean_delta_omega()),
        detrend_blocks: extraction.delta_omega.len(),
    };
    let meta = write_bitstream(&extraction.stream, &args.out, provenance)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&meta).expect("metadata serializes")
    );
    Ok(0)
}

fn default_sidecar(
    report: Option<&Path>,
    explicit: Option<PathBuf>,
    suffix: &str,
) -> Option<PathBuf> {
    explicit.or_else(|| {
        report.map(|r| {
            let mut name = r.as_os_str().to_owned();
            name.push(suffix);
            PathBuf::from(name)
        })
    })
}

fn analyze(args: AnalyzeArgs) -> Outcome {
    let thresholds = Thresholds {
        pass: args.pass_threshold,
        weak: args.weak_threshold,
    };
    if !(0.0 <= thresholds.weak && thresholds.weak <= thresholds.pass && thresholds.pass <= 1.0) {
        return Err(usage("thresholds must satisfy 0 <= weak <= pass <= 1"));
    }
    let all = args.tests.contains(&TestName::All);
    let wants = |t: TestName| all || args.tests.contains(&t);

    let is_trace = is_csv(&args.input) || has_trace_magic(&args.input)?;
    if wants(TestName::Ks) && !all && !is_trace {
        return Err(usage("the ks test needs a trace input, not a bitstream"));
    }
    let histogram_path = default_sidecar(args.report.as_deref(), args.histogram, ".histogram.csv");
    let autocorr_path = default_sidecar(
        args.report.as_deref(),
        args.autocorr_out,
        ".autocorrelation.csv",
    );
    echo(json!({
        "command": "analyze",
        "in": args.input,
        "input_kind": if is_trace { "trace" } else { "bitstream" },
        "tests": args.tests.iter().map(|t| format!("{t:?}").to_lowercase()).collect::<Vec<_>>(),
        "max_lag": args.max_lag,
        "bits": args.bits,
        "thresholds": thresholds,
        "report": args.report,
        "histogram": histogram_path,
        "autocorrelation": autocorr_path,
    }));

    // Phases for the KS and autocorrelation tests: wrapped increments for a
    // trace, symbol values for a bitstream.
    let (stream, phases): (BitStream, Vec<f64>) = if is_trace {
        let config = ExtractionConfig {
            out_bits: args.bits,
            ..ExtractionConfig::default()
        };
        let extraction = extract_file(&args.input, config, args.adc_bits)?;
        (extraction.stream, extraction.increments)
    } else {
        let (stream, _) = read_bitstream(&args.input, args.bits)?;
        let values = stream.symbols().iter().map(|&s| s as f64).collect();
        (stream, values)
    };

    let mut reports: Vec<StatReport> = Vec::new();
    if wants(TestName::Monobit) {
        reports.push(monobit_test(&stream, thresholds)?);
    }
    if wants(TestName::Runs) {
        reports.push(runs_test(&stream, thresholds)?);
    }
    if wants(TestName::Chi2) {
        reports.push(chi_square_symbols(&stream, thresholds)?);
    }
    if wants(TestName::Ks) && is_trace {
        reports.push(ks_uniform_test(&phases, thresholds)?);
    }
    for r in &reports {
        eprintln!(
            "{:<12} statistic={:<14.6e} p={:<10.6} n={:<10} {}",
            r.test_name, r.statistic, r.p_value, r.n_samples, r.verdict
        );
    }

    if let Some(path) = &histogram_path {
        write_histogram_csv(&symbol_histogram(&stream), path)?;
    }
    if wants(TestName::Autocorr) {
        let k = autocorrelation(&phases, args.max_lag)?;
        let max_abs = k.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        eprintln!(
            "{:<12} max|K(d)|={max_abs:.3e} over d=1..{} (1/sqrt(N)={:.3e})",
            "autocorr",
            args.max_lag,
            1.0 / (phases.len() as f64).sqrt()
        );
        if let Some(path) = &autocorr_path {
            write_autocorrelation_csv(&k, path)?;
        }
    }

    match &args.report {
        Some(path) => write_reports(&reports, path)?,
        None => {
            for r in &reports {
                println!("{}", serde_json::to_string(r).expect("report serializes"));
            }
        }
    }
    let failed = reports.iter().any(|r| r.verdict.is_failure());
    Ok(if failed { EXIT_ANALYSIS } else { 0 })
}

fn selftest(args: SelftestArgs) -> Outcome {
    let ids: Vec<u8> = if args.only.is_empty() {
        acceptance::CRITERIA.collect()
    } else {
        args.only
    };
    if let Some(bad) = ids.iter().find(|id| !acceptance::CRITERIA.contains(id)) {
        return Err(usage(format!("no criterion {bad}")));
    }
    echo(json!({ "command": "selftest", "criteria": ids }));
    let mut failed = 0;
    for id in &ids {
        let outcome = acceptance::run_criterion(*id);
        println!("{outcome}");
        failed += usize::from(!outcome.passed);
    }
    println!("{} of {} criteria passed", ids.len() - failed, ids.len());
    Ok(if failed > 0 { EXIT_ANALYSIS } else { 0 })
}

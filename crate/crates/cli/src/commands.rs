use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use occ_core::codec::{run_metrics, write_trace_csv, Decoder, Encoder, RunMetrics};
use occ_core::conformal::coverage_bound;
use occ_core::predictor::{Predictor, Symbol};
use occ_core::transport::{read_container, write_container, ContainerBody, StreamContainer};
use serde::Serialize;

use crate::config::Settings;
use crate::error::CliError;

const BYTE_ALPHABET: usize = 256;

/// Bits per symbol of an uncompressed fixed-length code.
pub fn uncompressed_bits(alphabet_size: usize) -> u32 {
    usize::BITS - (alphabet_size.max(2) - 1).leading_zeros()
}

fn read_symbols(path: &Path, alphabet_size: usize) -> Result<Vec<Symbol>, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    if alphabet_size == BYTE_ALPHABET {
        return Ok(bytes.into_iter().map(Symbol::from).collect());
    }
    let text = String::from_utf8(bytes).map_err(|_| {
        CliError::Config(format!(
            "{}: token input must be UTF-8 text",
            path.display()
        ))
    })?;
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<u32>()
                .ok()
                .filter(|&id| (id as usize) < alphabet_size)
                .map(Symbol)
                .ok_or_else(|| {
                    CliError::Config(format!("{}: invalid token id {tok:?}", path.display()))
                })
        })
        .collect()
}

fn write_symbols(path: &Path, symbols: &[Symbol], alphabet_size: usize) -> Result<(), CliError> {
    let data = if alphabet_size == BYTE_ALPHABET {
        symbols.iter().map(|s| s.0 as u8).collect::<Vec<u8>>()
    } else {
        let mut text = symbols
            .iter()
            .map(|s| s.0.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        text.push('\n');
        text.into_bytes()
    };
    std::fs::write(path, data).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("metrics serialize");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(CliError::io(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
pub struct EncodeReport {
    pub mode: &'static str,
    pub coder: &'static str,
    #[serde(flatten)]
    pub metrics: RunMetrics,
    /// Bits per symbol of a fixed-length code over the alphabet.
    pub uncompressed_rate: u32,
    pub container_bytes: u64,
    /// Framing bits not counted in the rate.
    pub wire_overhead_bits: u64,
    pub predictor_hash: String,
}

pub struct EncodeArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub metrics: Option<&'a Path>,
    pub trace: Option<&'a Path>,
}

pub fn encode(settings: &Settings, args: EncodeArgs<'_>) -> Result<EncodeReport, CliError> {
    let predictor = settings.predictor.build()?;
    let alphabet_size = predictor.alphabet_size();
    let hash = settings.predictor.fingerprint()?;
    let symbols = read_symbols(args.input, alphabet_size)?;
    let mut encoder = Encoder::new(settings.params, predictor)?;
    let outcomes = encoder.encode_all(&symbols)?;

    let params = &settings.params;
    let container = StreamContainer::from_outcomes(
        params.mode,
        params.coder,
        params.conformal,
        hash,
        alphabet_size as u32,
        &outcomes,
    );
    let bytes = write_container(&container);
    std::fs::write(args.out, &bytes).map_err(CliError::io(args.out))?;

    if let Some(path) = args.trace {
        let file = File::create(path).map_err(CliError::io(path))?;
        write_trace_csv(BufWriter::new(file), &outcomes, &params.conformal).map_err(|e| {
            CliError::Io {
                path: path.to_path_buf(),
                source: e.into(),
            }
        })?;
    }

    let report = EncodeReport {
        mode: params.mode.as_str(),
        coder: params.coder.as_str(),
        metrics: run_metrics(&outcomes, &params.conformal),
        uncompressed_rate: uncompressed_bits(alphabet_size),
        container_bytes: bytes.len() as u64,
        wire_overhead_bits: bytes.len() as u64 * 8 - container.header.payload_bits,
        predictor_hash: format!("{hash:016x}"),
    };
    write_json(args.metrics, &report)?;
    Ok(report)
}

#[derive(Serialize)]
pub struct DecodeReport {
    pub mode: &'static str,
    pub steps: u64,
    pub payload_bits: u64,
    pub rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<Audit>,
}

/// Comparison against the original input.
#[derive(Serialize)]
pub struct Audit {
    pub outages: u64,
    pub distortion: f64,
    pub alpha: f64,
    pub bound: f64,
    pub within_guarantee: bool,
}

pub struct DecodeArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub original: Option<PathBuf>,
    pub metrics: Option<&'a Path>,
}

pub fn decode(settings: &Settings, args: DecodeArgs<'_>) -> Result<DecodeReport, CliError> {
    let bytes = std::fs::read(args.input).map_err(CliError::io(args.input))?;
    let container = read_container(&bytes)?;
    let header = container.header;
    let hash = settings.predictor.fingerprint()?;
    if hash != header.predictor_hash {
        return Err(CliError::Integrity(format!(
            "predictor fingerprint {hash:016x} does not match the container ({:016x})",
            header.predictor_hash
        )));
    }
    let predictor = settings.predictor.build()?;
    let alphabet_size = predictor.alphabet_size();
    if alphabet_size as u32 != header.alphabet_size {
        return Err(CliError::Integrity(format!(
            "alphabet size {alphabet_size} does not match the container ({})",
            header.alphabet_size
        )));
    }
    let mut params = settings.params;
    params.mode = header.mode;
    params.coder = header.coder;
    params.conformal = header.conformal;
    let mut decoder = Decoder::new(params, predictor)?;
    let decoded: Vec<Symbol> = match &container.body {
        ContainerBody::Slots(slots) => slots
            .iter()
            .map(|m| decoder.decode_step(m))
            .collect::<Result<_, _>>()?,
        ContainerBody::Stream(bits) => {
            let mut reader = bits.reader();
            let out = (0..header.steps)
                .map(|_| decoder.decode_from_stream(&mut reader))
                .collect::<Result<Vec<_>, _>>()?;
            if reader.remaining() != 0 {
                return Err(CliError::Integrity(format!(
                    "{} unread bits after the last symbol",
                    reader.remaining()
                )));
            }
            out
        }
    };
    write_symbols(args.out, &decoded, alphabet_size)?;

    let audit = match &args.original {
        Some(path) => {
            let original = read_symbols(path, alphabet_size)?;
            if original.len() != decoded.len() {
                return Err(CliError::Integrity(format!(
                    "original has {} symbols, container has {}",
                    original.len(),
                    decoded.len()
                )));
            }
            let outages = original
                .iter()
                .zip(&decoded)
                .filter(|(a, b)| a != b)
                .count() as u64;
            let t = decoded.len().max(1) as f64;
            let bound = coverage_bound(&header.conformal, decoded.len().max(1) as u64);
            Some(Audit {
                outages,
                distortion: outages as f64 / t,
                alpha: header.conformal.alpha,
                bound,
                within_guarantee: outages as f64 / t <= header.conformal.alpha + bound,
            })
        }
        None => None,
    };
    let report = DecodeReport {
        mode: header.mode.as_str(),
        steps: header.steps,
        payload_bits: header.payload_bits,
        rate: header.payload_bits as f64 / header.steps.max(1) as f64,
        audit,
    };
    write_json(args.metrics, &report)?;
    Ok(report)
}

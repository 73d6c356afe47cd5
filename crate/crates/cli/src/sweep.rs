use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use occ_core::benchmarks::{bcc_search, dropout_llmzip_run, BccConfig, BenchRow, DropoutConfig};
use occ_core::codec::{simulate, Mode, QuantilePolicy, SimTrace};
use occ_core::conformal::{coverage_bound, ConformalConfig};
use occ_core::exec::{self, Execution};
use occ_core::predictor::{AnyPredictor, Predictor, Symbol};
use serde::Serialize;

use crate::config::{Scenario, Scheme, Settings, SweepSection};
use crate::error::CliError;

/// Per-step cost and outage indicator of one run.
struct Curve {
    bits: Vec<u32>,
    outages: Vec<bool>,
}

impl Curve {
    fn from_sim(trace: &SimTrace, mode: Mode) -> Option<Curve> {
        let bits = trace
            .steps
            .iter()
            .map(|s| match mode {
                Mode::Sync => Some(s.sync_bits),
                Mode::Async => s.async_bits,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Curve {
            bits,
            outages: trace.steps.iter().map(|s| s.outage).collect(),
        })
    }
}

struct Cell {
    scheme: Scheme,
    mode: Mode,
    alpha: f64,
    seed: u64,
    curve: Option<Curve>,
}

#[derive(Serialize)]
struct SummaryRow {
    scheme: &'static str,
    mode: &'static str,
    alpha: f64,
    #[serde(rename = "B_T")]
    rate: f64,
    distortion: f64,
    bound: f64,
    #[serde(rename = "T")]
    steps: usize,
    sequences: usize,
}

#[derive(Serialize)]
struct TraceRow {
    scheme: &'static str,
    mode: &'static str,
    alpha: f64,
    t: usize,
    cumulative_rate: f64,
    cumulative_outage_rate: f64,
    bound: f64,
}

pub struct SweepOutput {
    pub rows: usize,
    pub summary_rows: usize,
}

fn sequences(sweep: &SweepSection) -> Result<Vec<Vec<Symbol>>, CliError> {
    let corpora = sweep
        .corpora
        .iter()
        .map(|p| std::fs::read(p).map_err(CliError::io(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let to_symbols = |b: &[u8]| b.iter().map(|&x| Symbol::from(x)).collect::<Vec<_>>();
    let (n, len) = (sweep.sequences, sweep.length);
    let mut out = Vec::with_capacity(n);
    match sweep.scenario {
        Scenario::Stationary => {
            let all: Vec<u8> = corpora.concat();
            if all.len() < n * len {
                return Err(CliError::Config(format!(
                    "corpora hold {} bytes, {n} sequences of {len} need {}",
                    all.len(),
                    n * len
                )));
            }
            for i in 0..n {
                out.push(to_symbols(&all[i * len..(i + 1) * len]));
            }
        }
        Scenario::Shift => {
            let [a, b] = corpora.as_slice() else {
                return Err(CliError::Config(
                    "the shift scenario needs exactly two corpora".into(),
                ));
            };
            let half = len / 2;
            let rest = len - half;
            if a.len() < n * half || b.len() < n * rest {
                return Err(CliError::Config(format!(
                    "shift scenario needs {} bytes of the first corpus and {} of the second",
                    n * half,
                    n * rest
                )));
            }
            for i in 0..n {
                let mut s = to_symbols(&a[i * half..(i + 1) * half]);
                s.extend(to_symbols(&b[i * rest..(i + 1) * rest]));
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn validate(sweep: &SweepSection) -> Result<(), CliError> {
    let fail = |m: &str| Err(CliError::Config(m.to_string()));
    if sweep.corpora.is_empty() {
        return fail("sweep needs at least one corpus");
    }
    if sweep.schemes.is_empty() || sweep.modes.is_empty() || sweep.alphas.is_empty() {
        return fail("sweep needs at least one scheme, mode and alpha");
    }
    if sweep.sequences == 0 || sweep.length == 0 {
        return fail("sweep needs a positive sequence count and length");
    }
    if sweep.alphas.iter().any(|a| !(0.0..1.0).contains(a)) {
        return fail("sweep alphas must lie in [0, 1)");
    }
    if sweep.bcc_grid == 0 {
        return fail("bcc_grid must be positive");
    }
    Ok(())
}

fn run_job(
    settings: &Settings,
    sweep: &SweepSection,
    predictor: &AnyPredictor,
    seq: &[Symbol],
    index: usize,
    alpha: f64,
    exec: Execution,
) -> Result<Vec<Cell>, CliError> {
    let base = settings.params.conformal;
    let config = ConformalConfig {
        alpha,
        gamma1: alpha,
        eta1: base.eta1,
        beta: base.beta,
    };
    let seed = settings.seed + index as u64;
    let mut cells = Vec::new();
    for &scheme in &sweep.schemes {
        match scheme {
            Scheme::Occ => {
                let trace = simulate(seq, predictor.clone(), config, QuantilePolicy::Adaptive)?;
                for &mode in &sweep.modes {
                    cells.push(Cell {
                        scheme,
                        mode,
                        alpha,
                        seed,
                        curve: Curve::from_sim(&trace, mode),
                    });
                }
            }
            Scheme::Dropout => {
                for &mode in &sweep.modes {
                    let run = dropout_llmzip_run(
                        seq,
                        predictor.clone(),
                        DropoutConfig { alpha, seed },
                        mode,
                    )?;
                    let curve = Curve {
                        bits: run.steps.iter().map(|s| s.bits).collect(),
                        outages: run.distortions.clone(),
                    };
                    cells.push(Cell {
                        scheme,
                        mode,
                        alpha,
                        seed,
                        curve: Some(curve),
                    });
                }
            }
            Scheme::Bcc => {
                let mut bcc = BccConfig::new(alpha);
                bcc.grid_points = sweep.bcc_grid;
                bcc.anytime = sweep.bcc_anytime;
                bcc.eta1 = base.eta1;
                bcc.beta = base.beta;
                let result = bcc_search(seq, predictor, &bcc, exec)?;
                let fixed = ConformalConfig {
                    gamma1: result.gamma_star,
                    ..config
                };
                let trace = simulate(
                    seq,
                    predictor.clone(),
                    fixed,
                    QuantilePolicy::Fixed(result.gamma_star),
                )?;
                for &mode in &sweep.modes {
                    cells.push(Cell {
                        scheme,
                        mode,
                        alpha,
                        seed,
                        curve: Curve::from_sim(&trace, mode),
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Runs the configured grid and writes `results.csv`, `summary.csv` and,
/// when enabled, `traces.csv` into `out_dir`.
pub fn sweep(
    settings: &Settings,
    out_dir: &Path,
    exec: Execution,
) -> Result<SweepOutput, CliError> {
    let sweep = settings.sweep.as_ref().ok_or_else(|| {
        CliError::Config("sweep needs a [sweep] section in the config file".into())
    })?;
    validate(sweep)?;
    let predictor = settings.predictor.build()?;
    if predictor.alphabet_size() != 256 {
        return Err(CliError::Config(
            "sweeps run on byte corpora and need a 256-symbol predictor".into(),
        ));
    }
    let seqs = sequences(sweep)?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;

    let jobs: Vec<(usize, f64)> = (0..seqs.len())
        .flat_map(|i| sweep.alphas.iter().map(move |&a| (i, a)))
        .collect();
    let results = exec::map(exec, &jobs, |&(i, alpha)| {
        run_job(settings, sweep, &predictor, &seqs[i], i, alpha, exec)
    });
    let cells: Vec<Cell> = results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let t = sweep.length;
    let bound_for = |alpha: f64| {
        let c = ConformalConfig {
            alpha,
            gamma1: alpha,
            ..settings.params.conformal
        };
        coverage_bound(&c, t as u64)
    };

    let path = out_dir.join("results.csv");
    let mut w = csv_writer(&path)?;
    for c in &cells {
        let (rate, distortion) = match &c.curve {
            Some(curve) => (
                curve.bits.iter().map(|&b| b as f64).sum::<f64>() / t as f64,
                curve.outages.iter().filter(|&&o| o).count() as f64 / t as f64,
            ),
            None => (f64::NAN, f64::NAN),
        };
        w.serialize(BenchRow::new(
            c.scheme.as_str(),
            c.mode,
            c.alpha,
            rate,
            distortion,
            bound_for(c.alpha),
            t as u64,
            c.seed,
        ))
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(CliError::io(&path))?;

    // group cells by (scheme, mode, alpha) in first-seen order
    let mut keys: Vec<(Scheme, Mode, u64)> = Vec::new();
    for c in &cells {
        let k = (c.scheme, c.mode, c.alpha.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let summary_path = out_dir.join("summary.csv");
    let mut summary = csv_writer(&summary_path)?;
    let mut trace_writer = if sweep.traces {
        let p = out_dir.join("traces.csv");
        Some((csv_writer(&p)?, p))
    } else {
        None
    };
    for &(scheme, mode, alpha_bits) in &keys {
        let alpha = f64::from_bits(alpha_bits);
        let group: Vec<&Curve> = cells
            .iter()
            .filter(|c| c.scheme == scheme && c.mode == mode && c.alpha.to_bits() == alpha_bits)
            .filter_map(|c| c.curve.as_ref())
            .collect();
        let n = group.len();
        let mut cum_bits = vec![0.0f64; t];
        let mut cum_out = vec![0.0f64; t];
        for curve in &group {
            let (mut b, mut o) = (0u64, 0u64);
            for i in 0..t {
                b += curve.bits[i] as u64;
                o += curve.outages[i] as u64;
                cum_bits[i] += b as f64 / (i + 1) as f64;
                cum_out[i] += o as f64 / (i + 1) as f64;
            }
        }
        let avg = |v: f64| if n == 0 { f64::NAN } else { v / n as f64 };
        summary
            .serialize(SummaryRow {
                scheme: scheme.as_str(),
                mode: mode.as_str(),
                alpha,
                rate: avg(cum_bits[t - 1]),
                distortion: avg(cum_out[t - 1]),
                bound: bound_for(alpha),
                steps: t,
                sequences: n,
            })
            .map_err(csv_err(&summary_path))?;
        if let Some((w, p)) = &mut trace_writer {
            let c = ConformalConfig {
                alpha,
                gamma1: alpha,
                ..settings.params.conformal
            };
            for i in 0..t {
                w.serialize(TraceRow {
                    scheme: scheme.as_str(),
                    mode: mode.as_str(),
                    alpha,
                    t: i + 1,
                    cumulative_rate: avg(cum_bits[i]),
                    cumulative_outage_rate: avg(cum_out[i]),
                    bound: coverage_bound(&c, i as u64 + 1),
                })
                .map_err(csv_err(p))?;
            }
        }
    }
    summary.flush().map_err(CliError::io(&summary_path))?;
    if let Some((mut w, p)) = trace_writer {
        w.flush().map_err(CliError::io(&p))?;
    }
    Ok(SweepOutput {
        rows: cells.len(),
        summary_rows: keys.len(),
    })
}

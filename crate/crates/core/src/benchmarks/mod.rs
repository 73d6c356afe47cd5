//! Baseline schemes and the outage-mass sweep.

mod bcc;
mod dropout;

pub use bcc::{bcc_candidate, bcc_search, BccCandidate, BccConfig, BccResult, DEFAULT_GRID_POINTS};
pub use dropout::{dropout_llmzip_run, DropoutConfig, DropoutRng, DropoutRun, DropoutStep};

use serde::Serialize;
use thiserror::Error;

use crate::codec::{appendix_rate_bound, CodecError, Mode, SimTrace};
use crate::exec::{self, Execution};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
}

/// One row of the benchmark results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub scheme: String,
    pub mode: String,
    pub alpha: f64,
    #[serde(rename = "B_T")]
    pub rate: f64,
    pub distortion: f64,
    pub bound: f64,
    #[serde(rename = "T")]
    pub steps: u64,
    pub seed: u64,
}

impl BenchRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scheme: &str,
        mode: Mode,
        alpha: f64,
        rate: f64,
        distortion: f64,
        bound: f64,
        steps: u64,
        seed: u64,
    ) -> Self {
        BenchRow {
            scheme: scheme.to_string(),
            mode: mode.as_str().to_string(),
            alpha,
            rate,
            distortion,
            bound,
            steps,
            seed,
        }
    }
}

/// Evenly spaced points `step, 2 step, ...` strictly inside (0, 1).
pub fn epsilon_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..n).map(|i| i as f64 / n as f64).collect()
}

/// Per-symbol rate bound of an asynchronous run as a function of the outage
/// token mass, for each `eps` in `grid`.
pub fn epsilon_sweep(
    trace: &SimTrace,
    grid: &[f64],
    exec: Execution,
) -> Result<Vec<(f64, f64)>, BenchError> {
    if let Some(&bad) = grid.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(BenchError::Epsilon(bad));
    }
    let t = trace.len().max(1) as f64;
    Ok(exec::map(exec, grid, |&eps| {
        let total = appendix_rate_bound(trace.steps.iter().map(|s| s.truncated_prob), eps);
        (eps, total / t)
    }))
}

/// Grid point with the smallest sweep value; the first one on ties.
pub fn sweep_argmin(sweep: &[(f64, f64)]) -> Option<f64> {
    sweep
        .iter()
        .fold(None, |best: Option<(f64, f64)>, &(e, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((e, v)),
        })
        .map(|(e, _)| e)
}

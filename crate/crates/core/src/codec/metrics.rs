use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::conformal::{coverage_bound, ConformalConfig};

use super::StepOutcome;

/// Summary of a run (or of a prefix of one).
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub steps: u64,
    pub total_bits: u64,
    /// Average payload bits per symbol.
    pub rate: f64,
    pub outages: u64,
    /// Fraction of incorrectly reconstructed symbols.
    pub distortion: f64,
    pub miscoverages: u64,
    pub miscoverage_rate: f64,
    pub alpha: f64,
    /// Coverage deviation bound at `steps`.
    pub bound: f64,
    /// `alpha + bound`, the guaranteed distortion ceiling.
    pub distortion_limit: f64,
}

/// Running totals, checked after every step.
#[derive(Clone, Debug)]
pub struct MetricsLedger {
    config: ConformalConfig,
    steps: u64,
    total_bits: u64,
    outages: u64,
    miscoverages: u64,
}

pub type PrefixMetrics = RunMetrics;

impl MetricsLedger {
    pub fn new(config: ConformalConfig) -> Self {
        MetricsLedger {
            config,
            steps: 0,
            total_bits: 0,
            outages: 0,
            miscoverages: 0,
        }
    }

    pub fn push(&mut self, bits: u64, covered: bool, outage: bool) -> RunMetrics {
        self.steps += 1;
        self.total_bits += bits;
        self.outages += outage as u64;
        self.miscoverages += !covered as u64;
        self.snapshot()
    }

    pub fn snapshot(&self) -> RunMetrics {
        let t = self.steps.max(1) as f64;
        let bound = if self.steps == 0 {
            f64::INFINITY
        } else {
            coverage_bound(&self.config, self.steps)
        };
        RunMetrics {
            steps: self.steps,
            total_bits: self.total_bits,
            rate: self.total_bits as f64 / t,
            outages: self.outages,
            distortion: self.outages as f64 / t,
            miscoverages: self.miscoverages,
            miscoverage_rate: self.miscoverages as f64 / t,
            alpha: self.config.alpha,
            bound,
            distortion_limit: self.config.alpha + bound,
        }
    }
}

pub fn run_metrics(trace: &[StepOutcome], config: &ConformalConfig) -> RunMetrics {
    let mut ledger = MetricsLedger::new(*config);
    for step in trace {
        ledger.push(step.bits as u64, step.covered, step.outage());
    }
    ledger.snapshot()
}

/// Summary from aggregate counts.
pub fn run_metrics_from_counts(
    config: &ConformalConfig,
    steps: u64,
    total_bits: u64,
    outages: u64,
    miscoverages: u64,
) -> RunMetrics {
    MetricsLedger {
        config: *config,
        steps,
        total_bits,
        outages,
        miscoverages,
    }
    .snapshot()
}

/// Metrics after each prefix `1..=T`.
pub fn prefix_metrics(trace: &[StepOutcome], config: &ConformalConfig) -> Vec<RunMetrics> {
    let mut ledger = MetricsLedger::new(*config);
    trace
        .iter()
        .map(|s| ledger.push(s.bits as u64, s.covered, s.outage()))
        .collect()
}

#[derive(Copy, Clone, Debug, Error, PartialEq)]
pub enum GuaranteeViolation {
    #[error("step {t}: distortion {distortion} exceeds alpha + bound = {limit}")]
    Distortion { t: u64, distortion: f64, limit: f64 },
    #[error("step {t}: miscoverage rate {rate} deviates from alpha by more than {bound}")]
    Coverage { t: u64, rate: f64, bound: f64 },
    #[error("step {t}: {outages} outages exceed {miscoverages} miscoverages")]
    OutagesExceedMiscoverages {
        t: u64,
        outages: u64,
        miscoverages: u64,
    },
    #[error("step {t}: {bits} payload bits exceed the rate bound {bound}")]
    RateBound { t: u64, bits: u64, bound: f64 },
}

impl RunMetrics {
    /// Checks the anytime guarantees at this prefix, with zero tolerance.
    pub fn check(&self) -> Result<(), GuaranteeViolation> {
        let t = self.steps;
        if self.outages > self.miscoverages {
            return Err(GuaranteeViolation::OutagesExceedMiscoverages {
                t,
                outages: self.outages,
                miscoverages: self.miscoverages,
            });
        }
        if (self.miscoverage_rate - self.alpha).abs() > self.bound {
            return Err(GuaranteeViolation::Coverage {
                t,
                rate: self.miscoverage_rate,
                bound: self.bound,
            });
        }
        if self.distortion > self.distortion_limit {
            return Err(GuaranteeViolation::Distortion {
                t,
                distortion: self.distortion,
                limit: self.distortion_limit,
            });
        }
        Ok(())
    }
}

/// Verifies coverage, distortion and outage/miscoverage ordering at every
/// prefix of a run given as `(covered, outage)` pairs.
pub fn check_guarantees(
    config: &ConformalConfig,
    steps: impl IntoIterator<Item = (bool, bool)>,
) -> Result<(), GuaranteeViolation> {
    let mut ledger = MetricsLedger::new(*config);
    for (covered, outage) in steps {
        ledger.push(0, covered, outage).check()?;
    }
    Ok(())
}

/// Upper bound on the total asynchronous payload of a run whose outage token
/// has mass `eps`:
///
/// ```text
/// T - sum_covered log2 p_trunc(x_t) - n_covered log2(1 - eps) - n_missed log2(eps)
/// ```
///
/// Each item is the truncated probability of the true symbol on a covered
/// step, or `None` on a miscovered step.
pub fn appendix_rate_bound(steps: impl IntoIterator<Item = Option<f64>>, eps: f64) -> f64 {
    let mut t = 0u64;
    let mut info = 0.0;
    let mut covered = 0u64;
    let mut missed = 0u64;
    for step in steps {
        t += 1;
        match step {
            Some(p) => {
                info += p.log2();
                covered += 1;
            }
            None => missed += 1,
        }
    }
    let mut bound = t as f64 - info;
    if covered > 0 {
        bound -= covered as f64 * (1.0 - eps).log2();
    }
    if missed > 0 {
        bound -= missed as f64 * eps.log2();
    }
    bound
}

#[derive(Serialize)]
struct TraceCsvRow {
    t: u64,
    symbol: u32,
    reconstructed: u32,
    covered: bool,
    bits: u32,
    gamma: f64,
    threshold: f64,
    set_size: usize,
    cumulative_rate: f64,
    cumulative_distortion: f64,
    miscoverage_rate: f64,
    bound: f64,
}

/// Writes one CSV row per step with running totals.
pub fn write_trace_csv<W: Write>(
    writer: W,
    trace: &[StepOutcome],
    config: &ConformalConfig,
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    let mut ledger = MetricsLedger::new(*config);
    for step in trace {
        let m = ledger.push(step.bits as u64, step.covered, step.outage());
        out.serialize(TraceCsvRow {
            t: step.t,
            symbol: step.symbol.0,
            reconstructed: step.reconstructed.0,
            covered: step.covered,
            bits: step.bits,
            gamma: step.gamma,
            threshold: step.threshold,
            set_size: step.set_size,
            cumulative_rate: m.rate,
            cumulative_distortion: m.distortion,
            miscoverage_rate: m.miscoverage_rate,
            bound: m.bound,
        })?;
    }
    out.flush()?;
    Ok(())
}

//! Rate-only simulation of the codec.
//!
//! Runs the same state machine as [`Encoder`](super::Encoder) but only
//! computes codeword lengths, for both transmission modes at once: the
//! prediction sets, coverage decisions and reconstructions do not depend on
//! the mode, only the payload sizes do. Asynchronous lengths use the Shannon
//! backend.

use crate::coder::{one_to_one_length, shannon_length};
use crate::conformal::{ConformalConfig, ConformalState, PredictionSet};
use crate::predictor::{Distribution, Predictor, Symbol};

use super::{member_mass, outage_reconstruction, CodecError, CodecState};

/// How the quantile level evolves.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum QuantilePolicy {
    /// Online update from coverage feedback.
    Adaptive,
    /// Level frozen at the given `gamma`; scores are still recorded.
    Fixed(f64),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SimStep {
    pub covered: bool,
    /// Reconstruction differs from the source symbol.
    pub outage: bool,
    pub sync_bits: u32,
    /// `None` when asynchronous coding is undefined for this step (an outage
    /// with `alpha = 0`).
    pub async_bits: Option<u32>,
    /// Truncated probability of the true symbol, when covered.
    pub truncated_prob: Option<f64>,
    pub set_size: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub alpha: f64,
    pub steps: Vec<SimStep>,
    pub reconstruction: Vec<Symbol>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn sync_bits(&self) -> u64 {
        self.steps.iter().map(|s| s.sync_bits as u64).sum()
    }

    pub fn async_bits(&self) -> Option<u64> {
        self.steps.iter().map(|s| s.async_bits.map(u64::from)).sum()
    }

    pub fn outages(&self) -> u64 {
        self.steps.iter().filter(|s| s.outage).count() as u64
    }

    pub fn miscoverages(&self) -> u64 {
        self.steps.iter().filter(|s| !s.covered).count() as u64
    }

    pub fn distortion(&self) -> f64 {
        self.outages() as f64 / self.steps.len().max(1) as f64
    }
}

/// 1-based rank of `symbol` among the set members ordered by probability
/// descending, ties by ascending id.
pub fn one_to_one_rank(dist: &Distribution, set: &PredictionSet, symbol: Symbol) -> usize {
    let p = dist.prob(symbol);
    1 + set
        .members()
        .iter()
        .filter(|&&s| {
            let q = dist.prob(s);
            q > p || (q == p && s < symbol)
        })
        .count()
}

pub(crate) fn step_lengths(
    dist: &Distribution,
    set: &PredictionSet,
    symbol: Symbol,
    covered: bool,
    alpha: f64,
) -> (u32, Option<u32>, Option<f64>) {
    if covered {
        let truncated = dist.prob(symbol) / member_mass(dist, set);
        let sync = one_to_one_length(one_to_one_rank(dist, set, symbol));
        let asynchronous = if alpha < 1.0 {
            Some(shannon_length(truncated * (1.0 - alpha)))
        } else {
            None
        };
        (sync, asynchronous, Some(truncated))
    } else if set.is_empty() {
        (0, Some(0), None)
    } else if alpha > 0.0 {
        (0, Some(shannon_length(alpha)), None)
    } else {
        (0, None, None)
    }
}

/// Runs the codec over `sequence` and reports per-step lengths for both modes.
///
/// With a fixed level the configuration is not validated: `alpha` then only
/// sets the outage-token mass and may be any value in `[0, 1]`.
pub fn simulate<P: Predictor>(
    sequence: &[Symbol],
    predictor: P,
    config: ConformalConfig,
    policy: QuantilePolicy,
) -> Result<SimTrace, CodecError> {
    let (conformal, adaptive) = match policy {
        QuantilePolicy::Adaptive => (ConformalState::new(config)?, true),
        QuantilePolicy::Fixed(gamma) => (ConformalState::with_gamma(config, gamma), false),
    };
    let alphabet = predictor.alphabet_size();
    let mut state = CodecState::new(predictor, conformal, adaptive);
    let mut steps = Vec::with_capacity(sequence.len());
    let mut reconstruction = Vec::with_capacity(sequence.len());
    for &symbol in sequence {
        Symbol::checked(symbol.0, alphabet)?;
        let plan = state.plan()?;
        let covered = plan.set.contains(symbol);
        let reconstructed = if covered {
            symbol
        } else {
            outage_reconstruction(&plan.dist, &plan.set)?
        };
        let (sync_bits, async_bits, truncated_prob) =
            step_lengths(&plan.dist, &plan.set, symbol, covered, config.alpha);
        steps.push(SimStep {
            covered,
            outage: reconstructed != symbol,
            sync_bits,
            async_bits,
            truncated_prob,
            set_size: plan.set.len() as u32,
        });
        reconstruction.push(reconstructed);
        state.commit(&plan, reconstructed, covered)?;
    }
    Ok(SimTrace {
        alpha: config.alpha,
        steps,
        reconstruction,
    })
}

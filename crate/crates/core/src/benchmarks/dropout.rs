use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::codec::{run_metrics_from_counts, CodecError, Mode, RunMetrics};
use crate::coder::{one_to_one_length, shannon_length};
use crate::conformal::ConformalConfig;
use crate::predictor::{Distribution, Predictor, Symbol};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DropoutConfig {
    /// Outage probability per step.
    pub alpha: f64,
    /// Shared seed of the common randomness.
    pub seed: u64,
}

/// Common randomness: SplitMix64 seeded with the raw seed, uniform draws
/// taken from the top 53 bits of each output.
#[derive(Clone, Debug)]
pub struct DropoutRng(SplitMix64);

impl DropoutRng {
    pub fn new(seed: u64) -> Self {
        DropoutRng(SplitMix64::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn draw_outage(&mut self, alpha: f64) -> bool {
        self.next_uniform() < alpha
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DropoutStep {
    /// The shared coin declared an outage.
    pub dropped: bool,
    pub reconstructed: Symbol,
    pub bits: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutRun {
    pub mode: Mode,
    pub alpha: f64,
    pub seed: u64,
    pub steps: Vec<DropoutStep>,
    pub distortions: Vec<bool>,
}

impl DropoutRun {
    pub fn total_bits(&self) -> u64 {
        self.steps.iter().map(|s| s.bits as u64).sum()
    }

    pub fn rate(&self) -> f64 {
        self.total_bits() as f64 / self.steps.len().max(1) as f64
    }

    pub fn outages(&self) -> u64 {
        self.distortions.iter().filter(|&&d| d).count() as u64
    }

    pub fn distortion(&self) -> f64 {
        self.outages() as f64 / self.steps.len().max(1) as f64
    }

    /// Summary with coverage bound values taken from `reference`.
    pub fn metrics(&self, reference: &ConformalConfig) -> RunMetrics {
        let dropped = self.steps.iter().filter(|s| s.dropped).count() as u64;
        run_metrics_from_counts(
            reference,
            self.steps.len() as u64,
            self.total_bits(),
            self.outages(),
            dropped,
        )
    }
}

fn rank_in_full(dist: &Distribution, symbol: Symbol) -> usize {
    let p = dist.prob(symbol);
    1 + dist
        .probs()
        .iter()
        .enumerate()
        .filter(|&(i, &q)| q > p || (q == p && (i as u32) < symbol.0))
        .count()
}

/// Runs the dropout baseline: symbols are coded under the full predictive
/// distribution unless the shared coin declares an outage, in which case the
/// decoder reconstructs the most likely symbol.
///
/// Sync mode uses the one-to-one rank code and sends nothing on outages.
/// Async mode uses Shannon lengths over the full distribution scaled by
/// `1 - alpha` plus an outage token of mass `alpha`.
pub fn dropout_llmzip_run<P: Predictor>(
    sequence: &[Symbol],
    mut predictor: P,
    config: DropoutConfig,
    mode: Mode,
) -> Result<DropoutRun, CodecError> {
    let alpha = config.alpha;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CodecError::Config(format!(
            "dropout alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut rng = DropoutRng::new(config.seed);
    let alphabet = predictor.alphabet_size();
    let mut steps = Vec::with_capacity(sequence.len());
    let mut distortions = Vec::with_capacity(sequence.len());
    for &symbol in sequence {
        Symbol::checked(symbol.0, alphabet)?;
        let dist = predictor.predict()?;
        let dropped = rng.draw_outage(alpha);
        let (reconstructed, bits) = if dropped {
            let bits = match mode {
                Mode::Sync => 0,
                // alpha = 1 leaves e as the only token
                Mode::Async => shannon_length(alpha),
            };
            (dist.argmax(), bits)
        } else {
            let bits = match mode {
                Mode::Sync => one_to_one_length(rank_in_full(&dist, symbol)),
                Mode::Async => shannon_length(dist.prob(symbol) * (1.0 - alpha)),
            };
            (symbol, bits)
        };
        steps.push(DropoutStep {
            dropped,
            reconstructed,
            bits,
        });
        distortions.push(reconstructed != symbol);
        predictor.feed(reconstructed)?;
    }
    Ok(DropoutRun {
        mode,
        alpha,
        seed: config.seed,
        steps,
        distortions,
    })
}

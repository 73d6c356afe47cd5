//! Encoder and decoder state machines.
//!
//! Each step both sides:
//! 1. ask the predictor for the next-symbol distribution,
//! 2. build the conformal prediction set,
//! 3. code the symbol losslessly under the set-truncated distribution if it
//!    is covered, otherwise signal an outage (silence in synchronous mode, the
//!    `e` token in asynchronous mode) and reconstruct the most probable symbol
//!    outside the set,
//! 4. record the reconstructed symbol's score, update the quantile level from
//!    the coverage bit, and feed the reconstruction to the predictor.
//!
//! Only information available to the decoder enters step 4, so the two state
//! machines stay identical after every step.

mod metrics;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    appendix_rate_bound, check_guarantees, prefix_metrics, run_metrics, run_metrics_from_counts,
    write_trace_csv, GuaranteeViolation, MetricsLedger, PrefixMetrics, RunMetrics,
};
pub use sim::{one_to_one_rank, simulate, QuantilePolicy, SimStep, SimTrace};

use crate::coder::{build_one_to_one, build_table, BitReader, CodeKind, CoderError, Token};
use crate::conformal::{ConformalConfig, ConformalError, ConformalState, PredictionSet};
use crate::predictor::{
    AnyPredictor, Distribution, Predictor, PredictorError, PredictorSpec, Symbol,
};
use crate::transport::SlotMessage;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error("step {step}: {source}")]
    Coder {
        step: u64,
        #[source]
        source: CoderError,
    },
    #[error("decoder desynchronized at step {step}: {reason}")]
    Desync { step: u64, reason: String },
    #[error("invalid codec configuration: {0}")]
    Config(String),
}

/// Transmission model.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Shared clock: an empty slot signals an outage at no cost.
    Sync,
    /// No shared clock: outages are coded explicitly in a self-delimiting stream.
    Async,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            other => Err(format!("unknown mode {other:?} (expected sync or async)")),
        }
    }
}

/// Prefix code used in asynchronous mode.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoderBackend {
    #[default]
    Shannon,
    Huffman,
}

impl CoderBackend {
    pub fn kind(self) -> CodeKind {
        match self {
            CoderBackend::Shannon => CodeKind::Shannon,
            CoderBackend::Huffman => CodeKind::Huffman,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoderBackend::Shannon => "shannon",
            CoderBackend::Huffman => "huffman",
        }
    }
}

impl std::str::FromStr for CoderBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shannon" => Ok(CoderBackend::Shannon),
            "huffman" => Ok(CoderBackend::Huffman),
            other => Err(format!(
                "unknown coder {other:?} (expected shannon or huffman)"
            )),
        }
    }
}

/// Everything the codec needs except the predictor instance.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecParams {
    pub mode: Mode,
    pub conformal: ConformalConfig,
    #[serde(default)]
    pub coder: CoderBackend,
}

impl CodecParams {
    pub fn new(mode: Mode, conformal: ConformalConfig) -> Self {
        CodecParams {
            mode,
            conformal,
            coder: CoderBackend::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        self.conformal.validate()?;
        if self.mode == Mode::Async && !(self.conformal.alpha > 0.0 && self.conformal.alpha < 1.0) {
            return Err(CodecError::Config(format!(
                "asynchronous mode needs 0 < alpha < 1 (the outage token has probability alpha), got {}",
                self.conformal.alpha
            )));
        }
        Ok(())
    }
}

/// Codec parameters plus the predictor description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    #[serde(flatten)]
    pub params: CodecParams,
    pub predictor: PredictorSpec,
}

/// Members of the set with probabilities renormalized to sum to one,
/// ascending by symbol id.
pub fn truncate(
    dist: &Distribution,
    set: &PredictionSet,
) -> Result<Vec<(Symbol, f64)>, CodecError> {
    if set.is_empty() {
        return Err(CodecError::Config(
            "cannot truncate to an empty prediction set".into(),
        ));
    }
    let mass = member_mass(dist, set);
    Ok(set
        .members()
        .iter()
        .map(|&s| (s, dist.prob(s) / mass))
        .collect())
}

/// Total predicted mass of the set, summed in ascending id order.
pub(crate) fn member_mass(dist: &Distribution, set: &PredictionSet) -> f64 {
    set.members().iter().map(|&s| dist.prob(s)).sum()
}

/// Scales the truncated distribution by `1 - alpha` and appends the outage
/// token with mass `alpha`. An empty truncated distribution (empty prediction
/// set) yields the certain outcome `{e: 1}`.
pub fn augment(truncated: &[(Symbol, f64)], alpha: f64) -> Result<Vec<(Token, f64)>, CodecError> {
    if truncated.is_empty() {
        return Ok(vec![(Token::Outage, 1.0)]);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CodecError::Config(format!(
            "augmentation needs 0 < alpha < 1, got {alpha}"
        )));
    }
    let mut out: Vec<(Token, f64)> = truncated
        .iter()
        .map(|&(s, p)| (Token::Symbol(s), p * (1.0 - alpha)))
        .collect();
    out.push((Token::Outage, alpha));
    Ok(out)
}

/// Most probable symbol outside the set; ties go to the lowest id.
pub fn outage_reconstruction(
    dist: &Distribution,
    set: &PredictionSet,
) -> Result<Symbol, CodecError> {
    dist.argmax_where(|s| !set.contains(s)).ok_or_else(|| {
        CodecError::Config("outage requested while the prediction set covers the alphabet".into())
    })
}

/// Result of one encoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub t: u64,
    pub symbol: Symbol,
    pub message: SlotMessage,
    pub reconstructed: Symbol,
    pub covered: bool,
    /// Payload bits `b_t`.
    pub bits: u32,
    /// Quantile level in force during the step.
    pub gamma: f64,
    pub threshold: f64,
    pub set_size: usize,
    /// Truncated probability of the true symbol, when covered.
    pub truncated_prob: Option<f64>,
}

impl StepOutcome {
    pub fn outage(&self) -> bool {
        self.reconstructed != self.symbol
    }
}

/// Per-step working data derived from the shared state.
struct Plan {
    dist: Distribution,
    set: PredictionSet,
    gamma: f64,
}

/// State replicated on both ends of the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecState<P> {
    predictor: P,
    conformal: ConformalState,
    adaptive: bool,
}

impl<P: Predictor> CodecState<P> {
    fn new(predictor: P, conformal: ConformalState, adaptive: bool) -> Self {
        CodecState {
            predictor,
            conformal,
            adaptive,
        }
    }

    pub fn predictor(&self) -> &P {
        &self.predictor
    }

    pub fn conformal(&self) -> &ConformalState {
        &self.conformal
    }

    fn plan(&self) -> Result<Plan, CodecError> {
        let dist = self.predictor.predict()?;
        let set = self.conformal.prediction_set(&dist);
        Ok(Plan {
            dist,
            set,
            gamma: self.conformal.gamma(),
        })
    }

    /// The recorded score is the predicted probability of the reconstructed
    /// symbol: the true symbol on covered steps, the outage reconstruction
    /// otherwise (the decoder never learns the true symbol of an outage).
    fn commit(
        &mut self,
        plan: &Plan,
        reconstructed: Symbol,
        covered: bool,
    ) -> Result<(), CodecError> {
        let score = plan.dist.prob(reconstructed);
        if self.adaptive {
            self.conformal.update(score, covered);
        } else {
            self.conformal.record(score, covered);
        }
        self.predictor.feed(reconstructed)?;
        Ok(())
    }
}

/// Zero-delay OCC encoder.
#[derive(Clone, Debug)]
pub struct Encoder<P = AnyPredictor> {
    params: CodecParams,
    state: CodecState<P>,
}

impl Encoder<AnyPredictor> {
    pub fn from_config(config: &CodecConfig) -> Result<Self, CodecError> {
        Encoder::new(config.params, config.predictor.build()?)
    }
}

impl<P: Predictor> Encoder<P> {
    pub fn new(params: CodecParams, predictor: P) -> Result<Self, CodecError> {
        params.validate()?;
        let conformal = ConformalState::new(params.conformal)?;
        Ok(Encoder {
            params,
            state: CodecState::new(predictor, conformal, true),
        })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn state(&self) -> &CodecState<P> {
        &self.state
    }

    pub fn encode_step(&mut self, symbol: Symbol) -> Result<StepOutcome, CodecError> {
        let alphabet = self.state.predictor.alphabet_size();
        Symbol::checked(symbol.0, alphabet)?;
        let t = self.state.conformal.t();
        let plan = self.state.plan()?;
        let covered = plan.set.contains(symbol);
        let coder_err = |source| CodecError::Coder { step: t, source };

        let (message, reconstructed, truncated_prob) = if covered {
            let truncated = truncate(&plan.dist, &plan.set)?;
            let prob = truncated
                .iter()
                .find(|(s, _)| *s == symbol)
                .map(|&(_, p)| p);
            let bits = match self.params.mode {
                Mode::Sync => {
                    let support: Vec<_> = truncated
                        .iter()
                        .map(|&(s, p)| (Token::Symbol(s), p))
                        .collect();
                    build_one_to_one(&support)
                        .and_then(|table| table.encode(Token::Symbol(symbol)).cloned())
                        .map_err(coder_err)?
                }
                Mode::Async => {
                    let support = augment(&truncated, self.params.conformal.alpha)?;
                    build_table(self.params.coder.kind(), &support)
                        .and_then(|table| table.encode(Token::Symbol(symbol)).cloned())
                        .map_err(coder_err)?
                }
            };
            (SlotMessage::Present(bits), symbol, prob)
        } else {
            let reconstructed = outage_reconstruction(&plan.dist, &plan.set)?;
            let message = match self.params.mode {
                Mode::Sync => SlotMessage::Absent,
                Mode::Async => {
                    let truncated = if plan.set.is_empty() {
                        Vec::new()
                    } else {
                        truncate(&plan.dist, &plan.set)?
                    };
                    let support = augment(&truncated, self.params.conformal.alpha)?;
                    let bits = build_table(self.params.coder.kind(), &support)
                        .and_then(|table| table.encode(Token::Outage).cloned())
                        .map_err(coder_err)?;
                    SlotMessage::Present(bits)
                }
            };
            (message, reconstructed, None)
        };

        self.state.commit(&plan, reconstructed, covered)?;
        Ok(StepOutcome {
            t,
            symbol,
            bits: message.bit_len() as u32,
            message,
            reconstructed,
            covered,
            gamma: plan.gamma,
            threshold: plan.set.threshold(),
            set_size: plan.set.len(),
            truncated_prob,
        })
    }

    /// Encodes a whole sequence.
    pub fn encode_all(&mut self, symbols: &[Symbol]) -> Result<Vec<StepOutcome>, CodecError> {
        symbols.iter().map(|&s| self.encode_step(s)).collect()
    }
}

/// Zero-delay OCC decoder.
#[derive(Clone, Debug)]
pub struct Decoder<P = AnyPredictor> {
    params: CodecParams,
    state: CodecState<P>,
}

impl Decoder<AnyPredictor> {
    pub fn from_config(config: &CodecConfig) -> Result<Self, CodecError> {
        Decoder::new(config.params, config.predictor.build()?)
    }
}

enum Received<'m, 'r, 'b> {
    Slot(&'m SlotMessage),
    Stream(&'r mut BitReader<'b>),
}

impl<P: Predictor> Decoder<P> {
    pub fn new(params: CodecParams, predictor: P) -> Result<Self, CodecError> {
        params.validate()?;
        let conformal = ConformalState::new(params.conformal)?;
        Ok(Decoder {
            params,
            state: CodecState::new(predictor, conformal, true),
        })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn state(&self) -> &CodecState<P> {
        &self.state
    }

    /// Decodes one slot. In asynchronous mode the slot must hold exactly one
    /// codeword.
    pub fn decode_step(&mut self, message: &SlotMessage) -> Result<Symbol, CodecError> {
        self.step(Received::Slot(message))
    }

    /// Decodes the next codeword of an asynchronous bit stream.
    pub fn decode_from_stream(&mut self, reader: &mut BitReader<'_>) -> Result<Symbol, CodecError> {
        if self.params.mode != Mode::Async {
            return Err(CodecError::Config(
                "stream decoding is only defined for asynchronous mode".into(),
            ));
        }
        self.step(Received::Stream(reader))
    }

    fn step(&mut self, received: Received<'_, '_, '_>) -> Result<Symbol, CodecError> {
        let t = self.state.conformal.t();
        let plan = self.state.plan()?;
        let desync = |reason: String| CodecError::Desync { step: t, reason };

        let token = match (self.params.mode, received) {
            (Mode::Sync, Received::Slot(SlotMessage::Absent)) => Token::Outage,
            (Mode::Sync, Received::Slot(SlotMessage::Present(bits))) => {
                if plan.set.is_empty() {
                    return Err(desync(
                        "payload received while the prediction set is empty".into(),
                    ));
                }
                let truncated = truncate(&plan.dist, &plan.set)?;
                let support: Vec<_> = truncated
                    .iter()
                    .map(|&(s, p)| (Token::Symbol(s), p))
                    .collect();
                build_one_to_one(&support)
                    .and_then(|table| table.decode_with_length(bits))
                    .map_err(|e| desync(e.to_string()))?
            }
            (Mode::Sync, Received::Stream(_)) => unreachable!("rejected by decode_from_stream"),
            (Mode::Async, received) => {
                let truncated = if plan.set.is_empty() {
                    Vec::new()
                } else {
                    truncate(&plan.dist, &plan.set)?
                };
                let support = augment(&truncated, self.params.conformal.alpha)?;
                let table = build_table(self.params.coder.kind(), &support)
                    .map_err(|source| CodecError::Coder { step: t, source })?;
                match received {
                    Received::Slot(SlotMessage::Absent) => {
                        return Err(desync("asynchronous slots are never empty".into()))
                    }
                    Received::Slot(SlotMessage::Present(bits)) => table
                        .decode_with_length(bits)
                        .map_err(|e| desync(e.to_string()))?,
                    Received::Stream(reader) => {
                        table.decode(reader).map_err(|e| desync(e.to_string()))?
                    }
                }
            }
        };

        let (reconstructed, covered) = match token {
            Token::Symbol(s) => (s, true),
            Token::Outage => {
                let r = outage_reconstruction(&plan.dist, &plan.set).map_err(|_| {
                    desync("outage signalled while the prediction set is full".into())
                })?;
                (r, false)
            }
        };
        self.state.commit(&plan, reconstructed, covered)?;
        Ok(reconstructed)
    }
}

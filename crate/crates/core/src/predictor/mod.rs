//! Autoregressive next-symbol predictors.
//!
//! A predictor only ever sees the *reconstructed* history. The encoder and
//! decoder each own an instance built from the same [`PredictorSpec`] and feed
//! it the same symbols, so both sides compute bit-identical distributions.

mod context;
mod replay;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use context::{ContextModel, ContextModelConfig};
pub use replay::{write_replay, ReplayPredictor, ReplayTable, REPLAY_MAGIC, REPLAY_VERSION};

/// Lower bound applied to every probability before normalization.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("symbol {symbol} outside alphabet of size {alphabet_size}")]
    InvalidSymbol { symbol: u32, alphabet_size: usize },
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),
    #[error("replay stream ended at step {step} ({rows} rows available)")]
    ReplayExhausted { step: usize, rows: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid predictor configuration: {0}")]
    Config(String),
    #[error("replay file line {line}: {reason}")]
    ReplayFormat { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Index of a symbol in a finite alphabet.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(pub u32);

impl Symbol {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn checked(id: u32, alphabet_size: usize) -> Result<Self, PredictorError> {
        if (id as usize) < alphabet_size {
            Ok(Symbol(id))
        } else {
            Err(PredictorError::InvalidSymbol {
                symbol: id,
                alphabet_size,
            })
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u8> for Symbol {
    fn from(b: u8) -> Self {
        Symbol(b as u32)
    }
}

/// Probability vector over the alphabet for the next symbol.
///
/// Every entry is strictly positive (floored at [`PROBABILITY_FLOOR`]) and the
/// entries sum to one within [`NORMALIZATION_TOLERANCE`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Floors every weight at [`PROBABILITY_FLOOR`] and normalizes.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, PredictorError> {
        if weights.len() < 2 {
            return Err(PredictorError::AlphabetTooSmall(weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(PredictorError::InvalidDistribution(format!(
                "weight {w} is negative or not finite"
            )));
        }
        for w in weights.iter_mut() {
            if *w < PROBABILITY_FLOOR {
                *w = PROBABILITY_FLOOR;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Distribution { probs: weights })
    }

    /// Accepts an already-normalized vector without modification.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, PredictorError> {
        if probs.len() < 2 {
            return Err(PredictorError::AlphabetTooSmall(probs.len()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p <= 0.0) {
            return Err(PredictorError::InvalidDistribution(format!(
                "probability {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PredictorError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(alphabet_size: usize) -> Self {
        Distribution {
            probs: vec![1.0 / alphabet_size as f64; alphabet_size],
        }
    }

    #[inline]
    pub fn prob(&self, symbol: Symbol) -> f64 {
        self.probs[symbol.index()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    /// Most probable symbol; ties go to the lowest id.
    pub fn argmax(&self) -> Symbol {
        self.argmax_where(|_| true)
            .expect("distribution has at least two entries")
    }

    /// Most probable symbol among those accepted by `keep`; ties go to the
    /// lowest id.
    pub fn argmax_where(&self, mut keep: impl FnMut(Symbol) -> bool) -> Option<Symbol> {
        let mut best: Option<(Symbol, f64)> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            let sym = Symbol(i as u32);
            if !keep(sym) {
                continue;
            }
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((sym, p)),
            }
        }
        best.map(|(s, _)| s)
    }
}

/// Pluggable next-symbol model.
///
/// Implementations must be deterministic: the output of [`predict`] is a pure
/// function of the construction parameters and the symbols fed so far.
///
/// [`predict`]: Predictor::predict
pub trait Predictor {
    fn alphabet_size(&self) -> usize;

    /// Distribution of the next symbol given everything fed so far.
    fn predict(&self) -> Result<Distribution, PredictorError>;

    /// Appends a reconstructed symbol to the history.
    fn feed(&mut self, symbol: Symbol) -> Result<(), PredictorError>;
}

/// Memoryless uniform model.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformPredictor {
    alphabet_size: usize,
    fed: usize,
}

impl UniformPredictor {
    pub fn new(alphabet_size: usize) -> Result<Self, PredictorError> {
        if alphabet_size < 2 {
            return Err(PredictorError::AlphabetTooSmall(alphabet_size));
        }
        Ok(UniformPredictor {
            alphabet_size,
            fed: 0,
        })
    }
}

impl Predictor for UniformPredictor {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn predict(&self) -> Result<Distribution, PredictorError> {
        Ok(Distribution::uniform(self.alphabet_size))
    }

    fn feed(&mut self, symbol: Symbol) -> Result<(), PredictorError> {
        Symbol::checked(symbol.0, self.alphabet_size)?;
        self.fed += 1;
        Ok(())
    }
}

/// Declarative predictor description, shared by encoder, decoder and config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    ContextModel {
        #[serde(default = "default_alphabet")]
        alphabet_size: usize,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_prior")]
        prior: f64,
        /// Training text fed to the model before the first step on both sides.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prime: Option<PathBuf>,
    },
    Replay {
        path: PathBuf,
    },
    Uniform {
        #[serde(default = "default_alphabet")]
        alphabet_size: usize,
    },
}

fn default_alphabet() -> usize {
    256
}
fn default_order() -> usize {
    ContextModelConfig::DEFAULT_ORDER
}
fn default_prior() -> f64 {
    ContextModelConfig::DEFAULT_PRIOR
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::ContextModel {
            alphabet_size: default_alphabet(),
            order: default_order(),
            prior: default_prior(),
            prime: None,
        }
    }
}

impl PredictorSpec {
    pub fn build(&self) -> Result<AnyPredictor, PredictorError> {
        Ok(match self {
            PredictorSpec::ContextModel {
                alphabet_size,
                order,
                prior,
                prime,
            } => {
                let mut model = ContextModel::new(
                    *alphabet_size,
                    ContextModelConfig {
                        order: *order,
                        prior: *prior,
                    },
                )?;
                if let Some(path) = prime {
                    let text = read_file(path)?;
                    model.prime(&text)?;
                }
                AnyPredictor::Context(model)
            }
            PredictorSpec::Replay { path } => {
                AnyPredictor::Replay(ReplayPredictor::new(ReplayTable::load(path)?))
            }
            PredictorSpec::Uniform { alphabet_size } => {
                AnyPredictor::Uniform(UniformPredictor::new(*alphabet_size)?)
            }
        })
    }

    /// Alphabet size, reading the replay header if needed.
    pub fn alphabet_size(&self) -> Result<usize, PredictorError> {
        match self {
            PredictorSpec::ContextModel { alphabet_size, .. }
            | PredictorSpec::Uniform { alphabet_size } => Ok(*alphabet_size),
            PredictorSpec::Replay { path } => Ok(ReplayTable::load(path)?.alphabet_size()),
        }
    }

    /// 64-bit digest of the spec and every file it references.
    ///
    /// Stored in container headers so a decoder with a different predictor
    /// refuses to run instead of silently desynchronizing.
    pub fn fingerprint(&self) -> Result<u64, PredictorError> {
        let mut hasher = Sha256::new();
        match self {
            PredictorSpec::ContextModel {
                alphabet_size,
                order,
                prior,
                prime,
            } => {
                hasher.update(b"context_model\0");
                hasher.update((*alphabet_size as u64).to_be_bytes());
                hasher.update((*order as u64).to_be_bytes());
                hasher.update(prior.to_bits().to_be_bytes());
                if let Some(path) = prime {
                    hasher.update(b"prime\0");
                    hasher.update(read_file(path)?);
                }
            }
            PredictorSpec::Replay { path } => {
                hasher.update(b"replay\0");
                hasher.update(read_file(path)?);
            }
            PredictorSpec::Uniform { alphabet_size } => {
                hasher.update(b"uniform\0");
                hasher.update((*alphabet_size as u64).to_be_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Ok(u64::from_be_bytes(head))
    }
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>, PredictorError> {
    std::fs::read(path).map_err(|source| PredictorError::Io {
        path: path.clone(),
        source,
    })
}

/// Closed set of built-in predictors, used wherever a [`PredictorSpec`] is
/// instantiated at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyPredictor {
    Context(ContextModel),
    Replay(ReplayPredictor),
    Uniform(UniformPredictor),
}

impl Predictor for AnyPredictor {
    fn alphabet_size(&self) -> usize {
        match self {
            AnyPredictor::Context(p) => p.alphabet_size(),
            AnyPredictor::Replay(p) => p.alphabet_size(),
            AnyPredictor::Uniform(p) => p.alphabet_size(),
        }
    }

    fn predict(&self) -> Result<Distribution, PredictorError> {
        match self {
            AnyPredictor::Context(p) => p.predict(),
            AnyPredictor::Replay(p) => p.predict(),
            AnyPredictor::Uniform(p) => p.predict(),
        }
    }

    fn feed(&mut self, symbol: Symbol) -> Result<(), PredictorError> {
        match self {
            AnyPredictor::Context(p) => p.feed(symbol),
            AnyPredictor::Replay(p) => p.feed(symbol),
            AnyPredictor::Uniform(p) => p.feed(symbol),
        }
    }
}

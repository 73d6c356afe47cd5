#![allow(dead_code)]

use std::path::PathBuf;

use occ_core::codec::{CodecParams, Decoder, Encoder, Mode, StepOutcome};
use occ_core::conformal::ConformalConfig;
use occ_core::predictor::{ContextModel, ContextModelConfig, Predictor, Symbol, UniformPredictor};
use occ_core::transport::SlotMessage;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn english() -> Vec<u8> {
    std::fs::read(data_path("english.txt")).expect("english corpus")
}

pub fn shifted() -> Vec<u8> {
    std::fs::read(data_path("shift.txt")).expect("shift corpus")
}

pub fn symbols(bytes: &[u8]) -> Vec<Symbol> {
    bytes.iter().map(|&b| Symbol::from(b)).collect()
}

pub fn iid_uniform(len: usize, seed: u64) -> Vec<Symbol> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..len).map(|_| Symbol(rng.next_u32() & 0xff)).collect()
}

pub fn context_model() -> ContextModel {
    ContextModel::new(256, ContextModelConfig::default()).unwrap()
}

/// Definition-level quantile: the largest stored score `p` such that a
/// fraction of at least `level` of the scores is `>= p`. Returns the
/// threshold convention: 0 for the full set, +inf for the empty set.
pub fn brute_quantile(scores: &[f64], level: f64) -> f64 {
    if scores.is_empty() || level >= 1.0 {
        return 0.0;
    }
    if level <= 0.0 {
        return f64::INFINITY;
    }
    let n = scores.len() as f64;
    scores
        .iter()
        .copied()
        .filter(|&p| scores.iter().filter(|&&s| s >= p).count() as f64 / n >= level)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bit length floor(log2 rank) by counting, not by floating point.
pub fn floor_log2(rank: usize) -> u32 {
    usize::BITS - 1 - rank.leading_zeros()
}

#[derive(Clone, Debug)]
pub struct LockstepRun {
    pub outcomes: Vec<StepOutcome>,
    pub decoded: Vec<Symbol>,
    /// First step where the decoder state differed from the encoder state.
    pub state_mismatch: Option<u64>,
}

/// Runs encoder and decoder side by side, comparing full state after every
/// step.
pub fn lockstep<P: Predictor + Clone + PartialEq>(
    seq: &[Symbol],
    predictor: P,
    mode: Mode,
    conformal: ConformalConfig,
) -> LockstepRun {
    let params = CodecParams::new(mode, conformal);
    let mut enc = Encoder::new(params, predictor.clone()).unwrap();
    let mut dec = Decoder::new(params, predictor).unwrap();
    let mut outcomes = Vec::with_capacity(seq.len());
    let mut decoded = Vec::with_capacity(seq.len());
    let mut state_mismatch = None;
    for &x in seq {
        let out = enc.encode_step(x).unwrap();
        let y = dec.decode_step(&out.message).unwrap();
        if state_mismatch.is_none() && enc.state() != dec.state() {
            state_mismatch = Some(out.t);
        }
        decoded.push(y);
        outcomes.push(out);
    }
    LockstepRun {
        outcomes,
        decoded,
        state_mismatch,
    }
}

pub fn slot_bits(messages: &[SlotMessage]) -> u64 {
    messages.iter().map(|m| m.bit_len() as u64).sum()
}

pub fn uniform_predictor() -> UniformPredictor {
    UniformPredictor::new(256).unwrap()
}

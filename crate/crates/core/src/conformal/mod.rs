//! Online conformal prediction over predictive distributions.
//!
//! The prediction set at step `t` keeps every symbol whose predicted
//! probability reaches the `(1 - gamma_t)` empirical quantile of the scores
//! recorded so far, where a score is the probability the predictor assigned
//! to the symbol that was eventually recorded for that step. The quantile
//! level is driven by error feedback:
//!
//! ```text
//! gamma_{t+1} = gamma_t - eta_t * (1{miss_t} - alpha),   eta_t = eta_1 * t^(-beta)
//! ```
//!
//! `gamma` is never clamped. Out-of-range levels saturate only when a set is
//! built: a level at or above one (or an empty history) yields the whole
//! alphabet and a level at or below zero yields the empty set. With these
//! conventions the miscoverage rate after `T` steps is within
//! `(1 + eta_1) / (eta_1 * T^(1 - beta))` of `alpha` for every input sequence.

mod order_stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use order_stats::OrderStatistics;

use crate::predictor::{Distribution, Symbol};

#[derive(Debug, Error, PartialEq)]
pub enum ConformalError {
    #[error("alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
    #[error("gamma1 must lie in [0, 1], got {0}")]
    Gamma1(f64),
    #[error("eta1 must be positive and finite, got {0}")]
    Eta1(f64),
    #[error("beta must lie in [0, 1), got {0}")]
    Beta(f64),
}

/// Target rate and step-size schedule.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    /// Target long-run miscoverage rate.
    pub alpha: f64,
    /// Initial quantile level parameter.
    pub gamma1: f64,
    /// Base step size.
    pub eta1: f64,
    /// Step-size decay exponent.
    pub beta: f64,
}

impl ConformalConfig {
    /// Constant step size with `gamma1 = alpha`.
    pub fn new(alpha: f64, eta1: f64) -> Result<Self, ConformalError> {
        let config = ConformalConfig {
            alpha,
            gamma1: alpha,
            eta1,
            beta: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks the parameter ranges. `alpha = 0` is accepted; it degenerates to
    /// lossless operation when `gamma1 = 0`.
    pub fn validate(&self) -> Result<(), ConformalError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(ConformalError::Alpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma1) {
            return Err(ConformalError::Gamma1(self.gamma1));
        }
        if !(self.eta1.is_finite() && self.eta1 > 0.0) {
            return Err(ConformalError::Eta1(self.eta1));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(ConformalError::Beta(self.beta));
        }
        Ok(())
    }

    /// `eta_t = eta_1 * t^(-beta)` for `t >= 1`.
    pub fn step_size(&self, t: u64) -> f64 {
        if self.beta == 0.0 {
            self.eta1
        } else {
            self.eta1 * (t as f64).powf(-self.beta)
        }
    }

    pub fn coverage_bound(&self, steps: u64) -> f64 {
        coverage_bound(self, steps)
    }
}

/// Deterministic deviation bound `(1 + eta_1) / (eta_1 * T^(1 - beta))`.
pub fn coverage_bound(config: &ConformalConfig, steps: u64) -> f64 {
    assert!(steps >= 1, "coverage bound needs at least one step");
    (1.0 + config.eta1) / (config.eta1 * (steps as f64).powf(1.0 - config.beta))
}

/// Result of the empirical quantile lookup.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Quantile {
    /// Every symbol qualifies (threshold 0).
    Full,
    /// No symbol qualifies (threshold +inf).
    Empty,
    Value(f64),
}

impl Quantile {
    pub fn threshold(self) -> f64 {
        match self {
            Quantile::Full => 0.0,
            Quantile::Empty => f64::INFINITY,
            Quantile::Value(v) => v,
        }
    }
}

/// Largest `p` such that a fraction of at least `level` of the stored scores
/// is `>= p`, i.e. the `k`-th largest score for the smallest `k` with
/// `k / n >= level`.
pub fn empirical_quantile(scores: &OrderStatistics, level: f64) -> Quantile {
    let n = scores.len();
    if n == 0 || level >= 1.0 {
        return Quantile::Full;
    }
    if level <= 0.0 || level.is_nan() {
        return Quantile::Empty;
    }
    let nf = n as f64;
    let meets = |k: usize| k as f64 / nf >= level;
    let mut k = ((level * nf).ceil() as usize).clamp(1, n);
    while k > 1 && meets(k - 1) {
        k -= 1;
    }
    while !meets(k) {
        k += 1;
    }
    Quantile::Value(scores.kth_largest(k).expect("1 <= k <= n"))
}

/// Subset of the alphabet together with the threshold that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    members: Vec<Symbol>,
    in_set: Vec<bool>,
    threshold: f64,
}

impl PredictionSet {
    /// Members are exactly the symbols with probability `>= threshold`.
    pub fn from_threshold(dist: &Distribution, threshold: f64) -> Self {
        let in_set: Vec<bool> = dist.probs().iter().map(|&p| p >= threshold).collect();
        let members = in_set
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| Symbol(i as u32))
            .collect();
        PredictionSet {
            members,
            in_set,
            threshold,
        }
    }

    /// Set with explicit members, for callers that do not derive membership
    /// from a threshold.
    pub fn from_members(alphabet_size: usize, members: &[Symbol], threshold: f64) -> Self {
        let mut in_set = vec![false; alphabet_size];
        for s in members {
            in_set[s.index()] = true;
        }
        let members = (0..alphabet_size as u32)
            .map(Symbol)
            .filter(|s| in_set[s.index()])
            .collect();
        PredictionSet {
            members,
            in_set,
            threshold,
        }
    }

    /// Members in ascending id order.
    pub fn members(&self) -> &[Symbol] {
        &self.members
    }

    #[inline]
    pub fn contains(&self, symbol: Symbol) -> bool {
        self.in_set.get(symbol.index()).copied().unwrap_or(false)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.in_set.len()
    }
}

pub fn build_set(dist: &Distribution, state: &ConformalState) -> PredictionSet {
    PredictionSet::from_threshold(dist, state.quantile().threshold())
}

/// Mutable calibration state shared (as twin copies) by encoder and decoder.
#[derive(Clone, Debug)]
pub struct ConformalState {
    config: ConformalConfig,
    gamma: f64,
    scores: OrderStatistics,
    t: u64,
    miscoverages: u64,
}

impl PartialEq for ConformalState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.gamma.to_bits() == other.gamma.to_bits()
            && self.t == other.t
            && self.miscoverages == other.miscoverages
            && self.scores == other.scores
    }
}

impl ConformalState {
    pub fn new(config: ConformalConfig) -> Result<Self, ConformalError> {
        config.validate()?;
        Ok(Self::with_gamma(config, config.gamma1))
    }

    /// State whose level starts at `gamma` regardless of `config.gamma1`.
    pub fn with_gamma(config: ConformalConfig, gamma: f64) -> Self {
        ConformalState {
            config,
            gamma,
            scores: OrderStatistics::new(),
            t: 1,
            miscoverages: 0,
        }
    }

    pub fn config(&self) -> &ConformalConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Index of the step about to be processed (starts at 1).
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Steps processed so far.
    pub fn steps(&self) -> u64 {
        self.t - 1
    }

    pub fn miscoverages(&self) -> u64 {
        self.miscoverages
    }

    pub fn scores(&self) -> &OrderStatistics {
        &self.scores
    }

    pub fn quantile(&self) -> Quantile {
        empirical_quantile(&self.scores, 1.0 - self.gamma)
    }

    pub fn prediction_set(&self, dist: &Distribution) -> PredictionSet {
        build_set(dist, self)
    }

    /// Records the step's score and applies the quantile-level update.
    pub fn update(&mut self, score: f64, covered: bool) {
        let eta = self.config.step_size(self.t);
        let err = if covered { 0.0 } else { 1.0 };
        self.gamma -= eta * (err - self.config.alpha);
        self.record(score, covered);
    }

    /// Records the step's score and coverage without moving `gamma`.
    pub fn record(&mut self, score: f64, covered: bool) {
        self.scores.insert(score);
        if !covered {
            self.miscoverages += 1;
        }
        self.t += 1;
    }

    /// `|miscoverages / T - alpha|` over the steps processed so far.
    pub fn coverage_deviation(&self) -> Option<f64> {
        let steps = self.steps();
        (steps > 0).then(|| (self.miscoverages as f64 / steps as f64 - self.config.alpha).abs())
    }
}

/// One row of the per-step calibration trace.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub gamma: f64,
    pub threshold: f64,
    pub set_size: usize,
    pub covered: bool,
}

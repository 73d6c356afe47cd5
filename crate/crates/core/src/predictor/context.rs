use std::collections::{HashMap, VecDeque};

use super::{Distribution, Predictor, PredictorError, Symbol};

/// Parameters of the adaptive order-k context model.
///
/// Order 0 is an additive estimator `(c + prior) / (n + prior * |X|)`; with
/// `prior = 0.5` this is the Krichevsky–Trofimov estimator and with
/// `prior = 1.0` Laplace's rule. Every higher order `j` interpolates its counts
/// with the order `j - 1` estimate using Witten–Bell weights: the lower order
/// receives mass `u / (n + u)` where `n` is the number of visits to the
/// context and `u` the number of distinct successors seen in it. Unseen
/// contexts back off entirely.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ContextModelConfig {
    pub order: usize,
    pub prior: f64,
}

impl ContextModelConfig {
    pub const DEFAULT_ORDER: usize = 3;
    pub const DEFAULT_PRIOR: f64 = 0.5;
}

impl Default for ContextModelConfig {
    fn default() -> Self {
        ContextModelConfig {
            order: Self::DEFAULT_ORDER,
            prior: Self::DEFAULT_PRIOR,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Successors {
    // (symbol, count), in first-seen order
    counts: Vec<(u32, u32)>,
    total: u32,
}

impl Successors {
    fn bump(&mut self, symbol: u32) {
        self.total += 1;
        match self.counts.iter_mut().find(|(s, _)| *s == symbol) {
            Some((_, c)) => *c += 1,
            None => self.counts.push((symbol, 1)),
        }
    }
}

/// Byte-oriented (or any small alphabet) adaptive context model.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextModel {
    alphabet_size: usize,
    config: ContextModelConfig,
    bits_per_symbol: u32,
    order0: Vec<u32>,
    total0: u64,
    /// `tables[j - 1]` holds the successor counts of every order-`j` context.
    tables: Vec<HashMap<u64, Successors>>,
    /// Most recent symbols, newest at the back, at most `order` long.
    recent: VecDeque<u32>,
}

impl ContextModel {
    pub fn new(alphabet_size: usize, config: ContextModelConfig) -> Result<Self, PredictorError> {
        if alphabet_size < 2 {
            return Err(PredictorError::AlphabetTooSmall(alphabet_size));
        }
        if !(config.prior.is_finite() && config.prior > 0.0) {
            return Err(PredictorError::Config(format!(
                "prior must be positive, got {}",
                config.prior
            )));
        }
        let bits_per_symbol = usize::BITS - (alphabet_size - 1).leading_zeros();
        if config.order as u32 * bits_per_symbol > 64 {
            return Err(PredictorError::Config(format!(
                "order {} too deep for alphabet size {alphabet_size} (context key exceeds 64 bits)",
                config.order
            )));
        }
        Ok(ContextModel {
            alphabet_size,
            config,
            bits_per_symbol,
            order0: vec![0; alphabet_size],
            total0: 0,
            tables: vec![HashMap::new(); config.order],
            recent: VecDeque::with_capacity(config.order + 1),
        })
    }

    pub fn config(&self) -> ContextModelConfig {
        self.config
    }

    /// Feeds a training text (interpreted as one symbol per byte).
    pub fn prime(&mut self, text: &[u8]) -> Result<(), PredictorError> {
        for &b in text {
            self.feed(Symbol(b as u32))?;
        }
        Ok(())
    }

    /// Key of the context made of the `depth` most recent symbols.
    fn key(&self, depth: usize) -> u64 {
        self.recent
            .iter()
            .rev()
            .take(depth)
            .fold(0u64, |k, &s| (k << self.bits_per_symbol) | s as u64)
    }
}

impl Predictor for ContextModel {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn predict(&self) -> Result<Distribution, PredictorError> {
        let a = self.alphabet_size as f64;
        let prior = self.config.prior;
        let denom = self.total0 as f64 + prior * a;
        let mut probs: Vec<f64> = self
            .order0
            .iter()
            .map(|&c| (c as f64 + prior) / denom)
            .collect();
        for depth in 1..=self.recent.len() {
            let Some(ctx) = self.tables[depth - 1].get(&self.key(depth)) else {
                continue;
            };
            let n = ctx.total as f64;
            let u = ctx.counts.len() as f64;
            let lower = u / (n + u);
            for p in probs.iter_mut() {
                *p *= lower;
            }
            for &(s, c) in &ctx.counts {
                probs[s as usize] += c as f64 / (n + u);
            }
        }
        Distribution::from_weights(probs)
    }

    fn feed(&mut self, symbol: Symbol) -> Result<(), PredictorError> {
        let s = Symbol::checked(symbol.0, self.alphabet_size)?.0;
        for depth in 1..=self.recent.len() {
            let key = self.key(depth);
            self.tables[depth - 1].entry(key).or_default().bump(s);
        }
        self.order0[s as usize] += 1;
        self.total0 += 1;
        if self.config.order > 0 {
            if self.recent.len() == self.config.order {
                self.recent.pop_front();
            }
            self.recent.push_back(s);
        }
        Ok(())
    }
}

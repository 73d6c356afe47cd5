use crate::codec::{simulate, CodecError, Mode, QuantilePolicy, SimTrace};
use crate::conformal::{coverage_bound, ConformalConfig};
use crate::exec::{self, Execution};
use crate::predictor::{Predictor, Symbol};

pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BccConfig {
    /// Distortion requirement; also the outage-token mass in async mode.
    pub alpha: f64,
    /// Number of evenly spaced levels in `[0, 1]`, endpoints included.
    pub grid_points: usize,
    /// Require `distortion <= alpha + bound(t)` at every prefix instead of
    /// `distortion <= alpha` at the end only.
    pub anytime: bool,
    /// Step-size parameters used for the anytime slack.
    pub eta1: f64,
    pub beta: f64,
}

impl BccConfig {
    pub fn new(alpha: f64) -> Self {
        BccConfig {
            alpha,
            grid_points: DEFAULT_GRID_POINTS,
            anytime: false,
            eta1: 0.001,
            beta: 0.0,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        if n == 1 {
            return vec![0.0];
        }
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    fn slack_config(&self) -> ConformalConfig {
        ConformalConfig {
            alpha: self.alpha,
            gamma1: self.alpha,
            eta1: self.eta1,
            beta: self.beta,
        }
    }
}

/// Outcome of one fixed level.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BccCandidate {
    pub gamma: f64,
    pub feasible: bool,
    pub distortion: f64,
    pub sync_rate: f64,
    /// `None` when asynchronous coding is undefined (`alpha = 0` with a miss).
    pub async_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BccResult {
    pub gamma_star: f64,
    /// Some level met the requirement. Otherwise `gamma_star` is 0 and the
    /// reported figures are those of level 0.
    pub feasible: bool,
    pub distortion: f64,
    pub sync_rate: f64,
    pub async_rate: Option<f64>,
    pub candidates: Vec<BccCandidate>,
}

impl BccResult {
    pub fn rate(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Sync => Some(self.sync_rate),
            Mode::Async => self.async_rate,
        }
    }
}

fn feasible(trace: &SimTrace, config: &BccConfig) -> bool {
    if config.anytime {
        let slack = config.slack_config();
        let mut outages = 0u64;
        trace.steps.iter().enumerate().all(|(i, s)| {
            outages += s.outage as u64;
            let t = i as u64 + 1;
            outages as f64 / t as f64 <= config.alpha + coverage_bound(&slack, t)
        })
    } else {
        trace.distortion() <= config.alpha
    }
}

/// Evaluates one fixed level on the whole sequence.
pub fn bcc_candidate<P: Predictor>(
    sequence: &[Symbol],
    predictor: P,
    config: &BccConfig,
    gamma: f64,
) -> Result<BccCandidate, CodecError> {
    let conformal = ConformalConfig {
        alpha: config.alpha,
        gamma1: gamma,
        eta1: 1.0,
        beta: 0.0,
    };
    let trace = simulate(sequence, predictor, conformal, QuantilePolicy::Fixed(gamma))?;
    let t = trace.len().max(1) as f64;
    Ok(BccCandidate {
        gamma,
        feasible: feasible(&trace, config),
        distortion: trace.distortion(),
        sync_rate: trace.sync_bits() as f64 / t,
        async_rate: trace.async_bits().map(|b| b as f64 / t),
    })
}

/// Exhaustive search for the largest feasible constant level. Every grid
/// point is simulated; feasibility is not assumed monotone in the level.
pub fn bcc_search<P: Predictor + Clone + Sync>(
    sequence: &[Symbol],
    predictor: &P,
    config: &BccConfig,
    exec: Execution,
) -> Result<BccResult, CodecError> {
    if !(0.0..=1.0).contains(&config.alpha) || config.grid_points == 0 {
        return Err(CodecError::Config(format!(
            "invalid block search: alpha {} with {} grid points",
            config.alpha, config.grid_points
        )));
    }
    let grid = config.grid();
    let candidates = exec::map(exec, &grid, |&g| {
        bcc_candidate(sequence, predictor.clone(), config, g)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let best = candidates.iter().rev().find(|c| c.feasible).copied();
    let (chosen, feasible) = match best {
        Some(c) => (c, true),
        None => (candidates[0], false),
    };
    Ok(BccResult {
        gamma_star: if feasible { chosen.gamma } else { 0.0 },
        feasible,
        distortion: chosen.distortion,
        sync_rate: chosen.sync_rate,
        async_rate: chosen.async_rate,
        candidates,
    })
}

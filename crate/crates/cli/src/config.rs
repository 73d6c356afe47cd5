//! Config file schema and flag merging.
//!
//! Values come from built-in defaults, then the config file, then explicit
//! flags, each layer overriding the previous one.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use occ_core::codec::{CodecParams, CoderBackend, Mode};
use occ_core::conformal::ConformalConfig;
use occ_core::predictor::PredictorSpec;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_ETA1: f64 = 0.001;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Context,
    Uniform,
    Replay,
}

/// Codec flags shared by all subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct CodecArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Transmission mode: sync or async.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Target long-term outage rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Base step size of the quantile update.
    #[arg(long)]
    pub eta1: Option<f64>,
    /// Step-size decay exponent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Initial quantile level (defaults to alpha).
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Context order of the byte model.
    #[arg(long)]
    pub order: Option<usize>,
    /// Replay file for `--predictor replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Text fed to the context model before coding.
    #[arg(long)]
    pub prime: Option<PathBuf>,
    /// Prefix code for async mode: shannon or huffman.
    #[arg(long)]
    pub coder: Option<CoderBackend>,
    /// Seed of the shared randomness used by randomized baselines.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub alpha: Option<f64>,
    pub eta1: Option<f64>,
    pub beta: Option<f64>,
    pub gamma1: Option<f64>,
    pub coder: Option<CoderBackend>,
    pub seed: Option<u64>,
    pub predictor: Option<PredictorSpec>,
    pub sweep: Option<SweepSection>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Occ,
    Dropout,
    Bcc,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Occ => "occ",
            Scheme::Dropout => "dropout",
            Scheme::Bcc => "bcc",
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Consecutive windows of the concatenated corpora.
    #[default]
    Stationary,
    /// First half of each sequence from the first corpus, second half from
    /// the second.
    Shift,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Paths relative to the config file.
    pub corpora: Vec<PathBuf>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_bcc_grid")]
    pub bcc_grid: usize,
    #[serde(default)]
    pub bcc_anytime: bool,
    /// Also write per-step cumulative curves averaged over sequences.
    #[serde(default)]
    pub traces: bool,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Occ, Scheme::Dropout, Scheme::Bcc]
}
fn default_modes() -> Vec<Mode> {
    vec![Mode::Sync, Mode::Async]
}
fn default_sequences() -> usize {
    10
}
fn default_length() -> usize {
    3500
}
fn default_bcc_grid() -> usize {
    occ_core::benchmarks::DEFAULT_GRID_POINTS
}

/// Fully resolved settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub params: CodecParams,
    pub predictor: PredictorSpec,
    pub seed: u64,
    pub sweep: Option<SweepSection>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut cfg: FileConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    match &mut cfg.predictor {
        Some(PredictorSpec::Replay { path }) => rebase(path),
        Some(PredictorSpec::ContextModel { prime: Some(p), .. }) => rebase(p),
        _ => {}
    }
    if let Some(sweep) = &mut cfg.sweep {
        sweep.corpora.iter_mut().for_each(rebase);
    }
    Ok(cfg)
}

fn check_unit(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be finite")))
    }
}

impl CodecArgs {
    pub fn resolve(&self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let mode = self.mode.or(file.mode).unwrap_or(Mode::Sync);
        let alpha = check_unit("alpha", self.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA))?;
        let conformal = ConformalConfig {
            alpha,
            gamma1: check_unit("gamma1", self.gamma1.or(file.gamma1).unwrap_or(alpha))?,
            eta1: check_unit("eta1", self.eta1.or(file.eta1).unwrap_or(DEFAULT_ETA1))?,
            beta: check_unit("beta", self.beta.or(file.beta).unwrap_or(0.0))?,
        };
        let mut params = CodecParams::new(mode, conformal);
        params.coder = self.coder.or(file.coder).unwrap_or_default();

        let mut predictor = file.predictor.unwrap_or_default();
        match self.predictor {
            Some(PredictorKind::Context)
                if !matches!(predictor, PredictorSpec::ContextModel { .. }) =>
            {
                predictor = PredictorSpec::default();
            }
            Some(PredictorKind::Uniform) => {
                predictor = PredictorSpec::Uniform { alphabet_size: 256 };
            }
            Some(PredictorKind::Replay) => {
                let path = self
                    .replay
                    .clone()
                    .or(match &predictor {
                        PredictorSpec::Replay { path } => Some(path.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| {
                        CliError::Config("--predictor replay needs --replay <file>".into())
                    })?;
                predictor = PredictorSpec::Replay { path };
            }
            _ => {}
        }
        if let PredictorSpec::Replay { path } = &mut predictor {
            if let Some(p) = &self.replay {
                *path = p.clone();
            }
        }
        if let PredictorSpec::ContextModel { order, prime, .. } = &mut predictor {
            if let Some(o) = self.order {
                *order = o;
            }
            if let Some(p) = &self.prime {
                *prime = Some(p.clone());
            }
        } else if self.order.is_some() || self.prime.is_some() {
            return Err(CliError::Config(
                "--order and --prime apply only to the context predictor".into(),
            ));
        }

        Ok(Settings {
            params,
            predictor,
            seed: self.seed.or(file.seed).unwrap_or(0),
            sweep: file.sweep,
        })
    }
}

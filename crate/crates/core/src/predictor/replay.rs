//! Playback of externally computed per-step distributions.
//!
//! File format, version 1 (UTF-8 text, `\n` line endings):
//!
//! ```text
//! occ-replay 1 <alphabet_size> <rows>
//! <p_0> <p_1> ... <p_{alphabet_size-1}>
//! ...
//! ```
//!
//! Each of the `<rows>` lines holds one distribution as space-separated
//! decimals. [`write_replay`] emits 15 digits after the decimal point. Rows are
//! floored and renormalized on load exactly like any other predictor output.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{Distribution, Predictor, PredictorError, Symbol};

pub const REPLAY_MAGIC: &str = "occ-replay";
pub const REPLAY_VERSION: u32 = 1;

/// Parsed replay file.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayTable {
    alphabet_size: usize,
    rows: Vec<Distribution>,
}

impl ReplayTable {
    pub fn new(alphabet_size: usize, rows: Vec<Distribution>) -> Result<Self, PredictorError> {
        if alphabet_size < 2 {
            return Err(PredictorError::AlphabetTooSmall(alphabet_size));
        }
        if let Some(bad) = rows.iter().position(|r| r.alphabet_size() != alphabet_size) {
            return Err(PredictorError::InvalidDistribution(format!(
                "row {bad} has {} entries, expected {alphabet_size}",
                rows[bad].alphabet_size()
            )));
        }
        Ok(ReplayTable {
            alphabet_size,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let text = std::fs::read_to_string(path).map_err(|source| PredictorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PredictorError> {
        let fail = |line: usize, reason: String| PredictorError::ReplayFormat { line, reason };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| fail(1, "missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != REPLAY_MAGIC {
            return Err(fail(1, format!("bad header {header:?}")));
        }
        let version: u32 = fields[1]
            .parse()
            .map_err(|_| fail(1, format!("bad version {:?}", fields[1])))?;
        if version != REPLAY_VERSION {
            return Err(fail(1, format!("unsupported version {version}")));
        }
        let alphabet_size: usize = fields[2]
            .parse()
            .map_err(|_| fail(1, format!("bad alphabet size {:?}", fields[2])))?;
        let count: usize = fields[3]
            .parse()
            .map_err(|_| fail(1, format!("bad row count {:?}", fields[3])))?;

        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let weights = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fail(lineno, e.to_string()))?;
            if weights.len() != alphabet_size {
                return Err(fail(
                    lineno,
                    format!("{} entries, expected {alphabet_size}", weights.len()),
                ));
            }
            let row =
                Distribution::from_weights(weights).map_err(|e| fail(lineno, e.to_string()))?;
            rows.push(row);
        }
        if rows.len() != count {
            return Err(fail(
                0,
                format!("header declares {count} rows, found {}", rows.len()),
            ));
        }
        ReplayTable::new(alphabet_size, rows)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Serializes rows in the version-1 replay format.
pub fn write_replay(alphabet_size: usize, rows: &[Vec<f64>]) -> String {
    let mut out = format!(
        "{REPLAY_MAGIC} {REPLAY_VERSION} {alphabet_size} {}\n",
        rows.len()
    );
    for row in rows {
        for (i, p) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{p:.15}");
        }
        out.push('\n');
    }
    out
}

/// Emits row `n` after `n` symbols have been fed; the fed values are ignored.
#[derive(Clone, Debug)]
pub struct ReplayPredictor {
    table: Arc<ReplayTable>,
    cursor: usize,
}

impl ReplayPredictor {
    pub fn new(table: ReplayTable) -> Self {
        ReplayPredictor {
            table: Arc::new(table),
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.table.len().saturating_sub(self.cursor)
    }
}

impl PartialEq for ReplayPredictor {
    fn eq(&self, other: &Self) -> bool {
        self.cursor == other.cursor
            && (Arc::ptr_eq(&self.table, &other.table) || self.table == other.table)
    }
}

impl Predictor for ReplayPredictor {
    fn alphabet_size(&self) -> usize {
        self.table.alphabet_size
    }

    fn predict(&self) -> Result<Distribution, PredictorError> {
        self.table
            .rows
            .get(self.cursor)
            .cloned()
            .ok_or(PredictorError::ReplayExhausted {
                step: self.cursor + 1,
                rows: self.table.len(),
            })
    }

    fn feed(&mut self, symbol: Symbol) -> Result<(), PredictorError> {
        Symbol::checked(symbol.0, self.table.alphabet_size)?;
        self.cursor += 1;
        Ok(())
    }
}

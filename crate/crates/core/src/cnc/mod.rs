//! Compress-and-control value estimation.
//!
//! The engine keeps one state model per (return, action) bucket and one
//! return model per action. Each consumed triple updates exactly one of
//! each: the state that preceded action `a_i` goes to bucket `(z_i, a_i)`,
//! and `z_i` goes to the return model of `a_i`, where `z_i` is the sum of
//! the `m` rewards starting with `r_i`. Values then come from Bayes rule:
//!
//! ```text
//! w(z | s, a) ∝ ρ_S(s | z, a) · ρ_Z(z | a)        Q(s, a) = Σ_z z · w(z | s, a)
//! ```

mod engine;

pub use engine::{CncEngine, EngineConfig, QEstimate};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::snapshot::SnapshotError;
use crate::coding::{CodingError, Symbol};

#[derive(Debug, Error)]
pub enum CncError {
    #[error("reward {0} is not in the declared reward set")]
    UnknownReward(f64),

    #[error("return {0} is not in the declared return alphabet")]
    UnknownReturn(f64),

    #[error("action {action} is outside 0..{actions}")]
    InvalidAction { action: usize, actions: usize },

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),

    #[error("engine has no current state; call begin first")]
    NotStarted,

    #[error(transparent)]
    Coding(#[from] CodingError),
}

impl From<SnapshotError> for CncError {
    fn from(e: SnapshotError) -> Self {
        CncError::Coding(e.into())
    }
}

/// The finite set of achievable m-step returns, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnAlphabet {
    values: Vec<f64>,
}

/// Returns closer than this are the same symbol.
const RETURN_TOLERANCE: f64 = 1e-9;

impl ReturnAlphabet {
    pub fn new(mut values: Vec<f64>) -> Result<Self, CncError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(CncError::InvalidConfig("return alphabet must be non-empty and finite".into()));
        }
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() < RETURN_TOLERANCE);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn index_of(&self, z: f64) -> Result<usize, CncError> {
        let i = self.values.partition_point(|&v| v < z - RETURN_TOLERANCE);
        match self.values.get(i) {
            Some(&v) if (v - z).abs() < RETURN_TOLERANCE => Ok(i),
            _ => Err(CncError::UnknownReturn(z)),
        }
    }
}

/// One buffered step: the state before the action, the action, and the
/// reward it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedEntry {
    pub state: Vec<Symbol>,
    pub action: usize,
    pub reward: f64,
}

/// The last `m` steps, waiting for their m-step returns to complete.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedWindow {
    horizon: usize,
    entries: VecDeque<LaggedEntry>,
}

impl LaggedWindow {
    pub fn new(horizon: usize) -> Result<Self, CncError> {
        if horizon == 0 {
            return Err(CncError::InvalidConfig("horizon m must be at least 1".into()));
        }
        Ok(Self {
            horizon,
            entries: VecDeque::with_capacity(horizon),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LaggedEntry> {
        self.entries.iter()
    }

    /// Sum of the buffered rewards, oldest first.
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.reward).sum()
    }

    /// Buffers a step. Once `m` steps are held, the oldest leaves with
    /// its completed return.
    pub fn push(&mut self, entry: LaggedEntry) -> Option<(LaggedEntry, f64)> {
        self.entries.push_back(entry);
        if self.entries.len() == self.horizon {
            let z = self.sum();
            self.entries.pop_front().map(|e| (e, z))
        } else {
            None
        }
    }

    /// Empties the window at an episode boundary; each entry's return is
    /// the sum of rewards from it to the end of the episode.
    pub fn drain(&mut self) -> Vec<(LaggedEntry, f64)> {
        let mut out = Vec::with_capacity(self.entries.len());
        while !self.entries.is_empty() {
            let z = self.sum();
            out.push((self.entries.pop_front().expect("non-empty"), z));
        }
        out
    }

    pub(crate) fn restore(horizon: usize, entries: Vec<LaggedEntry>) -> Result<Self, CncError> {
        let mut w = Self::new(horizon)?;
        if entries.len() >= horizon {
            return Err(CncError::InvalidConfig("window snapshot holds too many entries".into()));
        }
        w.entries.extend(entries);
        Ok(w)
    }
}

/// Linear ε decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.02,
            decay_steps: 200_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_steps: 0,
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        if self.decay_steps == 0 || t >= self.decay_steps {
            return self.end;
        }
        let frac = t as f64 / self.decay_steps as f64;
        (self.start + (self.end - self.start) * frac).max(self.end.min(self.start))
    }

    pub fn validate(&self) -> Result<(), CncError> {
        let ok = |e: f64| (0.0..=1.0).contains(&e);
        if ok(self.start) && ok(self.end) {
            Ok(())
        } else {
            Err(CncError::InvalidConfig(format!("epsilon values must lie in [0, 1]: {self:?}")))
        }
    }
}

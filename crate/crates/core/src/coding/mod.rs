//! Coding distributions: sequential density models with a shared
//! predict/update contract.
//!
//! Two traits split the work. [`SequentialModel`] is the classic
//! one-symbol-at-a-time coding distribution ρ(x_n | x_{<n}) over an
//! [`Alphabet`]. [`StateModel`] scores whole observations, which may be a
//! single atomic symbol or a factored vector of cell values; this is the
//! shape the value engine needs for its per-bucket state models.
//!
//! Every model predicts without mutating itself. Predictions and updates
//! are deterministic functions of the update history.

mod ctw;
mod dirichlet;
mod factored;
mod frequency;
mod logistic;
mod lz;
mod sad;
pub mod snapshot;
mod spec;

pub use ctw::{CtwModel, CtwTree};
pub use dirichlet::DirichletModel;
pub use factored::{FactoredCtw, FactoredLogistic, FactoredSad, GridLayout};
pub use frequency::FrequencyModel;
pub use logistic::{Adagrad, SoftmaxRegression};
pub use lz::{lz_parse, lz_unparse, LzModel, Phrase};
pub use sad::{SadCounter, SadModel};
pub use spec::{build_state_model, build_symbol_model, ModelSpec, ObservationShape};

use std::fmt::Debug;

use thiserror::Error;

use snapshot::{SnapshotError, SnapshotWriter};

/// Index of a symbol within an alphabet.
pub type Symbol = usize;

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("symbol {symbol} is outside the alphabet of size {size}")]
    SymbolOutOfRange { symbol: Symbol, size: usize },

    #[error("alphabet size must be at least 1")]
    EmptyAlphabet,

    #[error("observation has {got} factors but the model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("model `{kind}` cannot be used for {role}")]
    UnsupportedRole { kind: &'static str, role: &'static str },

    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// A finite alphabet `{0, .., size-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self, CodingError> {
        if size == 0 {
            return Err(CodingError::EmptyAlphabet);
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn check(&self, symbol: Symbol) -> Result<(), CodingError> {
        if symbol < self.size {
            Ok(())
        } else {
            Err(CodingError::SymbolOutOfRange {
                symbol,
                size: self.size,
            })
        }
    }

    pub fn symbols(&self) -> std::ops::Range<Symbol> {
        0..self.size
    }
}

/// A coding distribution over single symbols.
///
/// `prob` must not mutate the model; `update` appends one symbol to the
/// history. Normalized models satisfy `Σ_x prob(x) = 1`. Models derived
/// from code lengths (see [`LzModel`]) report `is_normalized() == false`
/// and only promise scores in `(0, 1]`.
pub trait SequentialModel: Debug + Send + Sync {
    fn alphabet(&self) -> Alphabet;

    /// Number of symbols consumed by `update` so far.
    fn history_len(&self) -> u64;

    fn prob(&self, x: Symbol) -> Result<f64, CodingError>;

    fn update(&mut self, x: Symbol) -> Result<(), CodingError>;

    fn log2_prob(&self, x: Symbol) -> Result<f64, CodingError> {
        Ok(self.prob(x)?.log2())
    }

    fn is_normalized(&self) -> bool {
        true
    }

    /// Predictive distribution over the whole alphabet.
    fn probs(&self) -> Vec<f64> {
        self.alphabet()
            .symbols()
            .map(|x| self.prob(x).expect("symbol drawn from own alphabet"))
            .collect()
    }

    fn write_snapshot(&self, w: &mut SnapshotWriter);

    fn box_clone(&self) -> Box<dyn SequentialModel>;
}

impl Clone for Box<dyn SequentialModel> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// A coding distribution over whole observations (atomic or factored).
pub trait StateModel: Debug + Send + Sync {
    /// Number of observations consumed by `update`.
    fn history_len(&self) -> u64;

    /// `log2 ρ(obs | history)`. May be `-inf` for zero-probability events.
    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError>;

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError>;

    fn is_normalized(&self) -> bool {
        true
    }

    fn write_snapshot(&self, w: &mut SnapshotWriter);

    fn box_clone(&self) -> Box<dyn StateModel>;
}

impl Clone for Box<dyn StateModel> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Lifts a [`SequentialModel`] to a [`StateModel`] over one-symbol
/// observations.
#[derive(Debug, Clone)]
pub struct AtomicStateModel {
    inner: Box<dyn SequentialModel>,
}

impl AtomicStateModel {
    pub fn new(inner: Box<dyn SequentialModel>) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &dyn SequentialModel {
        self.inner.as_ref()
    }

    fn single(obs: &[Symbol]) -> Result<Symbol, CodingError> {
        match obs {
            [x] => Ok(*x),
            _ => Err(CodingError::ShapeMismatch {
                expected: 1,
                got: obs.len(),
            }),
        }
    }
}

impl StateModel for AtomicStateModel {
    fn history_len(&self) -> u64 {
        self.inner.history_len()
    }

    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError> {
        self.inner.log2_prob(Self::single(obs)?)
    }

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError> {
        self.inner.update(Self::single(obs)?)
    }

    fn is_normalized(&self) -> bool {
        self.inner.is_normalized()
    }

    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(snapshot::tag::ATOMIC, |w| self.inner.write_snapshot(w));
    }

    fn box_clone(&self) -> Box<dyn StateModel> {
        Box::new(self.clone())
    }
}

/// Code length of `seq` in bits under `model`, computed by
/// predict-then-update. The model ends up updated on `seq`.
pub fn logloss(model: &mut dyn SequentialModel, seq: &[Symbol]) -> Result<f64, CodingError> {
    let mut bits = 0.0;
    for &x in seq {
        bits -= model.log2_prob(x)?;
        model.update(x)?;
    }
    Ok(bits)
}

/// Like [`logloss`] but also returns the per-step probabilities.
pub fn logloss_trace(
    model: &mut dyn SequentialModel,
    seq: &[Symbol],
) -> Result<(f64, Vec<f64>), CodingError> {
    let mut bits = 0.0;
    let mut trace = Vec::with_capacity(seq.len());
    for &x in seq {
        let p = model.prob(x)?;
        bits -= model.log2_prob(x)?;
        trace.push(p);
        model.update(x)?;
    }
    Ok((bits, trace))
}

/// `log2(Σ 2^x_i)` with max-subtraction; `-inf` if every term is `-inf`.
pub fn log2_sum_exp2(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp2()).sum();
    max + sum.log2()
}

/// `ceil(log2(n))` for `n >= 1`.
pub(crate) fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

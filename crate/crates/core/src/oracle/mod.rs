//! Exact ground truth for explicit MDPs.
//!
//! The process `(A_t, S_t, R_t)` under a stationary policy is a Markov
//! chain over triples. Windows of `m + 1` consecutive triples form another
//! chain (the snake), whose stationary law gives the joint distribution of
//! a state, the following action and the next `m` rewards. From it `Q` is
//! recovered by Bayes rule and compared against plain backward induction.

mod augment;
mod chain;
mod dp;
mod random;
mod stationary;

pub use augment::{
    build_augmented_chain, build_base_chain, build_snake_chain, count_windows, q_via_nu, solve_snake, AugmentedChain,
    BaseChain, SnakeChain, StationaryResult, Triple, DEFAULT_WINDOW_CAP,
};
pub use chain::{check_properties, ChainProperties, SparseMatrix};
pub use dp::{q_via_dp, return_distribution};
pub use random::{random_ir_ap_mdp, random_mdp, RandomMdpParams};
pub use stationary::{stationary, SolveMethod, Stationary, DIRECT_SOLVE_LIMIT, RESIDUAL_TOLERANCE};

use std::io::{self, Write};

use thiserror::Error;

use crate::envs::EnvError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("stationary system is singular")]
    Singular,

    #[error("stationary solve did not converge (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("snake chain would have {windows} windows, above the cap of {cap}")]
    TooLarge { windows: u128, cap: usize },

    #[error("start state {0} is never revisited by the chain")]
    UnreachableStart(usize),

    #[error("horizon m must be at least 1")]
    ZeroHorizon,

    #[error(transparent)]
    Env(#[from] EnvError),
}

/// `Q(s, a)`; entries for pairs the chain never visits are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<Option<f64>>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![None; states * actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> Option<f64> {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.actions + a] = Some(value);
    }

    pub fn defined(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i / self.actions, i % self.actions, v)))
    }

    /// Largest `|Q(s,a) − Q'(s,a)|` over pairs defined in both tables.
    pub fn sup_gap(&self, other: &QTable) -> f64 {
        assert_eq!((self.states, self.actions), (other.states, other.actions), "Q tables differ in shape");
        self.values
            .iter()
            .zip(&other.values)
            .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .fold(0.0, f64::max)
    }

    /// Columns `s,a,z,value`; `z` is empty for Q entries.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "s,a,z,value")?;
        for (s, a, v) in self.defined() {
            writeln!(w, "{s},{a},,{v:?}")?;
        }
        Ok(())
    }
}

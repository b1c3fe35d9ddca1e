//! Environments: finite MDPs seen through a common step interface.
//!
//! An [`Environment`] holds its current state and advances on
//! [`step`](Environment::step). Episodic environments reset themselves
//! when an episode ends, so the stream of `(action, state, reward)` triples
//! never stops; the [`Step`] carries the boundary marker.

mod blackjack;
mod explicit;
mod minipong;

pub use blackjack::{Blackjack, BlackjackState, HIT, NUM_STATES as BLACKJACK_STATES, STAY};
pub use explicit::{ExplicitMdp, TabularEnv, Transition};
pub use minipong::{MiniPong, MiniPongConfig, NOOP, UP, DOWN};

use std::io::{self, Write};

use rand::Rng as _;
use thiserror::Error;

use crate::coding::{ObservationShape, Symbol};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} is outside 0..{actions}")]
    InvalidAction { action: usize, actions: usize },

    #[error("state {state} is outside 0..{states}")]
    InvalidState { state: usize, states: usize },

    #[error("invalid environment parameters: {0}")]
    InvalidParameters(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub reward: f64,
    /// The step ended an episode; the environment is already reset.
    pub episode_end: bool,
}

pub trait Environment: Send {
    fn num_actions(&self) -> usize;

    /// The declared finite reward set.
    fn rewards(&self) -> &[f64];

    /// Size of the atomic state space.
    fn num_states(&self) -> usize;

    /// Atomic index of the current state.
    fn state(&self) -> usize;

    /// How [`observe`](Self::observe) presents states to a state model.
    fn shape(&self) -> ObservationShape {
        ObservationShape::Atomic {
            states: self.num_states(),
        }
    }

    /// Writes the current observation: `[state]` for atomic shapes, the
    /// row-major cell vector for grids.
    fn observe(&self, out: &mut Vec<Symbol>) {
        out.clear();
        out.push(self.state());
    }

    /// Advances one step: `(S_t, R_t) ~ μ(· | S_{t−1}, A_t)`.
    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step, EnvError>;

    /// Starts a fresh episode.
    fn reset(&mut self, rng: &mut Rng);

    /// Whether m-step returns stop at episode boundaries. Environments
    /// that answer `false` are treated as one continuing chain.
    fn truncates_returns(&self) -> bool {
        false
    }

    /// Longest possible episode, in steps, if bounded.
    fn max_episode_len(&self) -> Option<usize> {
        None
    }

    /// Every value an m-step return can take, ascending.
    fn return_alphabet(&self, m: usize) -> Vec<f64> {
        sumset(self.rewards(), m, !self.truncates_returns())
    }
}

/// Sums of exactly `m` rewards (or of 1..=m rewards when `exact` is false),
/// ascending, with values closer than 1e-9 merged.
pub fn sumset(rewards: &[f64], m: usize, exact: bool) -> Vec<f64> {
    let mut all: Vec<f64> = Vec::new();
    let mut level = vec![0.0];
    for _ in 0..m {
        let mut next: Vec<f64> = level.iter().flat_map(|s| rewards.iter().map(move |r| s + r)).collect();
        dedup_sorted(&mut next);
        if !exact {
            all.extend_from_slice(&next);
        }
        level = next;
    }
    if exact {
        all = level;
    }
    dedup_sorted(&mut all);
    all
}

fn dedup_sorted(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
}

/// A stationary policy over atomic states.
pub trait Policy: Send + Sync {
    fn num_actions(&self) -> usize;

    fn sample(&self, state: usize, rng: &mut Rng) -> usize;
}

/// A stationary policy given by a table `π(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    /// Rows are normalized on construction; each must have a positive,
    /// finite sum and no negative entries.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        let actions = rows.first().map_or(0, Vec::len);
        if actions == 0 {
            return Err(EnvError::InvalidPolicy("policy needs at least one state and action".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != actions {
                return Err(EnvError::InvalidPolicy(format!("state {s} has {} actions, expected {actions}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || !(sum > 0.0 && sum.is_finite()) {
                return Err(EnvError::InvalidPolicy(format!("state {s} has an invalid row {row:?}")));
            }
            probs.extend(row.iter().map(|p| p / sum));
        }
        Ok(Self { actions, probs })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            actions,
            probs: vec![1.0 / actions as f64; states * actions],
        }
    }

    /// Always takes `choice[s]` in state `s`.
    pub fn deterministic(choice: &[usize], actions: usize) -> Result<Self, EnvError> {
        let rows = choice
            .iter()
            .map(|&a| {
                if a >= actions {
                    return Err(EnvError::InvalidAction { action: a, actions });
                }
                let mut row = vec![0.0; actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.actions..(state + 1) * self.actions]
    }
}

impl Policy for TabularPolicy {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn sample(&self, state: usize, rng: &mut Rng) -> usize {
        sample_index(self.row(state), rng)
    }
}

/// Uniform over actions in every state.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy(pub usize);

impl Policy for UniformPolicy {
    fn num_actions(&self) -> usize {
        self.0
    }

    fn sample(&self, _state: usize, rng: &mut Rng) -> usize {
        rng.random_range(0..self.0)
    }
}

/// Draws an index from a probability vector by inversion.
pub(crate) fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the running total; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One `(a_t, s_t, r_t)` triple of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub action: usize,
    pub state: usize,
    pub reward: f64,
    /// Index of the episode the action belongs to.
    pub episode: u64,
    pub episode_end: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// CSV with columns `step,episode,action,state,reward`. Row 0 holds
    /// the start state with empty action and reward.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "step,episode,action,state,reward")?;
        writeln!(w, "0,0,,{},", self.start)?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, s.episode, s.action, s.state, s.reward)?;
        }
        Ok(())
    }
}

/// Runs `policy` for `steps` steps from the environment's current state.
pub fn run_policy(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    steps: usize,
    env_rng: &mut Rng,
    policy_rng: &mut Rng,
) -> Result<Trajectory, EnvError> {
    if steps == 0 {
        return Err(EnvError::InvalidParameters("a trajectory needs at least one step".into()));
    }
    let start = env.state();
    let mut out = Vec::with_capacity(steps);
    let mut episode = 0;
    for _ in 0..steps {
        let action = policy.sample(env.state(), policy_rng);
        let step = env.step(action, env_rng)?;
        out.push(TrajectoryStep {
            action,
            state: env.state(),
            reward: step.reward,
            episode,
            episode_end: step.episode_end,
        });
        if step.episode_end {
            episode += 1;
        }
    }
    Ok(Trajectory { start, steps: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn sumset_enumerates_m_step_returns() {
        assert_eq!(sumset(&[-1.0, 1.0], 2, true), vec![-2.0, 0.0, 2.0]);
        assert_eq!(sumset(&[-1.0, 1.0], 2, false), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(sumset(&[0.1, 0.2], 3, true).len(), 4);
    }

    #[test]
    fn tabular_policy_rows_are_normalized() {
        let p = TabularPolicy::new(vec![vec![1.0, 3.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(p.row(0), &[0.25, 0.75]);
        assert_eq!(p.row(1), &[1.0, 0.0]);
        assert!(TabularPolicy::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(TabularPolicy::new(vec![vec![-1.0, 2.0]]).is_err());
        assert!(TabularPolicy::deterministic(&[2], 2).is_err());
    }

    #[test]
    fn sampling_never_picks_zero_probability_actions() {
        let mut rng = stream(1, Stream::Policy);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}

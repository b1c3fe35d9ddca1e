use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CncError, EpsilonSchedule, LaggedEntry, LaggedWindow, ReturnAlphabet};
use crate::coding::snapshot::{self, tag, SnapshotError, SnapshotReader, SnapshotWriter};
use crate::coding::{
    build_state_model, build_symbol_model, Alphabet, GridLayout, ModelSpec, ObservationShape, SequentialModel,
    StateModel, Symbol,
};
use crate::envs::Environment;
use crate::rng::{self, Rng, Stream};

const REWARD_TOLERANCE: f64 = 1e-12;

fn default_horizon() -> usize {
    1
}

fn default_state_model() -> ModelSpec {
    ModelSpec::Dirichlet { alpha: 0.5 }
}

fn default_return_model() -> ModelSpec {
    ModelSpec::Dirichlet { alpha: 0.5 }
}

/// Engine settings as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Return horizon `m`.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// ρ_S, instantiated once per (return, action) bucket.
    #[serde(default = "default_state_model")]
    pub state_model: ModelSpec,
    /// ρ_Z, instantiated once per action.
    #[serde(default = "default_return_model")]
    pub return_model: ModelSpec,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            state_model: default_state_model(),
            return_model: default_return_model(),
            epsilon: EpsilonSchedule::default(),
        }
    }
}

/// `Q̂(s, a)` with the return posterior it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    pub value: f64,
    /// `w(z | s, a)`, indexed like the return alphabet.
    pub posterior: Vec<f64>,
}

#[derive(Debug)]
pub struct CncEngine {
    horizon: usize,
    actions: usize,
    shape: ObservationShape,
    rewards: Vec<f64>,
    returns: ReturnAlphabet,
    truncate: bool,
    epsilon: EpsilonSchedule,
    /// Indexed `z * actions + a`.
    state_models: Vec<Box<dyn StateModel>>,
    return_models: Vec<Box<dyn SequentialModel>>,
    bucket_updates: Vec<u64>,
    window: LaggedWindow,
    current: Option<Vec<Symbol>>,
    rng: Rng,
    degenerate: AtomicU64,
}

impl CncEngine {
    /// Fresh engine. `truncate` ends m-step returns at episode boundaries.
    pub fn new(
        config: &EngineConfig,
        shape: ObservationShape,
        actions: usize,
        rewards: &[f64],
        returns: ReturnAlphabet,
        truncate: bool,
        seed: u64,
    ) -> Result<Self, CncError> {
        if actions == 0 || rewards.is_empty() {
            return Err(CncError::InvalidConfig("need at least one action and one reward".into()));
        }
        config.epsilon.validate()?;
        let window = LaggedWindow::new(config.horizon)?;
        let proto = build_state_model(&config.state_model, shape)?;
        let z_alphabet = Alphabet::new(returns.len())?;
        let proto_z = build_symbol_model(&config.return_model, z_alphabet)?;
        let buckets = returns.len() * actions;
        Ok(Self {
            horizon: config.horizon,
            actions,
            shape,
            rewards: rewards.to_vec(),
            returns,
            truncate,
            epsilon: config.epsilon,
            state_models: vec![proto; buckets],
            return_models: vec![proto_z; actions],
            bucket_updates: vec![0; buckets],
            window,
            current: None,
            rng: rng::stream(seed, Stream::Model),
            degenerate: AtomicU64::new(0),
        })
    }

    /// Engine sized for `env`: its actions, rewards, observation shape and
    /// m-step return alphabet.
    pub fn for_env(config: &EngineConfig, env: &dyn Environment, seed: u64) -> Result<Self, CncError> {
        let returns = ReturnAlphabet::new(env.return_alphabet(config.horizon))?;
        Self::new(
            config,
            env.shape(),
            env.num_actions(),
            env.rewards(),
            returns,
            env.truncates_returns(),
            seed,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn returns(&self) -> &ReturnAlphabet {
        &self.returns
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        self.epsilon
    }

    /// Number of updates bucket `(z, a)` has received.
    pub fn bucket_updates(&self, z: usize, action: usize) -> u64 {
        self.bucket_updates[z * self.actions + action]
    }

    /// Total triples consumed by the buckets.
    pub fn total_updates(&self) -> u64 {
        self.bucket_updates.iter().sum()
    }

    pub fn state_model(&self, z: usize, action: usize) -> &dyn StateModel {
        self.state_models[z * self.actions + action].as_ref()
    }

    pub fn return_model(&self, action: usize) -> &dyn SequentialModel {
        self.return_models[action].as_ref()
    }

    /// Posterior queries that fell back to the return model alone.
    pub fn degenerate_count(&self) -> u64 {
        self.degenerate.load(Ordering::Relaxed)
    }

    pub fn window(&self) -> &LaggedWindow {
        &self.window
    }

    /// Sets the current state, starting the stream.
    pub fn begin(&mut self, state: &[Symbol]) {
        self.current = Some(state.to_vec());
    }

    /// Consumes one `(a_t, s_t, r_t)` triple. When the window fills, the
    /// oldest step's state goes to bucket `(z, a)` and its return to the
    /// return model of `a`.
    pub fn step(&mut self, action: usize, next: &[Symbol], reward: f64, episode_end: bool) -> Result<(), CncError> {
        self.check_action(action)?;
        if !self.rewards.iter().any(|r| (r - reward).abs() <= REWARD_TOLERANCE) {
            return Err(CncError::UnknownReward(reward));
        }
        let state = self.current.replace(next.to_vec()).ok_or(CncError::NotStarted)?;
        if let Some((entry, z)) = self.window.push(LaggedEntry { state, action, reward }) {
            self.consume(entry, z)?;
        }
        if episode_end && self.truncate {
            for (entry, z) in self.window.drain() {
                self.consume(entry, z)?;
            }
        }
        Ok(())
    }

    fn consume(&mut self, entry: LaggedEntry, z: f64) -> Result<(), CncError> {
        let j = self.returns.index_of(z)?;
        let b = j * self.actions + entry.action;
        self.state_models[b].update(&entry.state)?;
        self.return_models[entry.action].update(j)?;
        self.bucket_updates[b] += 1;
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<(), CncError> {
        if action >= self.actions {
            return Err(CncError::InvalidAction {
                action,
                actions: self.actions,
            });
        }
        Ok(())
    }

    /// `log2 ρ_S(s | z, a) + log2 ρ_Z(z | a)` for every `z`.
    fn log_numerators(&self, state: &[Symbol], action: usize) -> Result<Vec<f64>, CncError> {
        let rz = &self.return_models[action];
        // fresh buckets are identical, so one prior score serves them all
        let mut prior = None;
        (0..self.returns.len())
            .map(|j| {
                let m = &self.state_models[j * self.actions + action];
                let ls = if m.history_len() == 0 {
                    match prior {
                        Some(p) => p,
                        None => *prior.insert(m.log2_prob(state)?),
                    }
                } else {
                    m.log2_prob(state)?
                };
                Ok(ls + rz.log2_prob(j)?)
            })
            .collect()
    }

    /// `w(z | s, a)` by Bayes rule over the buckets of `a`. If every
    /// numerator vanishes, the return model's prediction is used alone and
    /// the event is counted.
    pub fn return_posterior(&self, state: &[Symbol], action: usize) -> Result<Vec<f64>, CncError> {
        self.check_action(action)?;
        let logs = self.log_numerators(state, action)?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            self.degenerate.fetch_add(1, Ordering::Relaxed);
            let p = self.return_models[action].probs();
            let total: f64 = p.iter().sum();
            return Ok(p.into_iter().map(|x| x / total).collect());
        }
        let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp2()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }

    pub fn q_value(&self, state: &[Symbol], action: usize) -> Result<QEstimate, CncError> {
        let posterior = self.return_posterior(state, action)?;
        let value = posterior.iter().zip(self.returns.values()).map(|(w, z)| w * z).sum();
        Ok(QEstimate { value, posterior })
    }

    pub fn q_values(&self, state: &[Symbol]) -> Result<Vec<f64>, CncError> {
        (0..self.actions).map(|a| Ok(self.q_value(state, a)?.value)).collect()
    }

    /// Highest-valued action; ties broken uniformly from the engine's
    /// generator.
    pub fn greedy_action(&mut self, state: &[Symbol]) -> Result<usize, CncError> {
        let q = self.q_values(state)?;
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * best.abs().max(1.0);
        let ties: Vec<usize> = (0..q.len()).filter(|&a| q[a] >= best - tol).collect();
        Ok(ties[self.rng.random_range(0..ties.len())])
    }

    /// Uniform action with probability `ε(t)`, otherwise greedy.
    pub fn epsilon_greedy_action(&mut self, state: &[Symbol], t: u64) -> Result<usize, CncError> {
        if self.rng.random::<f64>() < self.epsilon.at(t) {
            Ok(self.rng.random_range(0..self.actions))
        } else {
            self.greedy_action(state)
        }
    }

    /// Serializes the whole engine: bucket models, window, current state
    /// and generator position.
    pub fn snapshot(&self) -> Vec<u8> {
        snapshot::frame(|w| {
            w.record(tag::ENGINE, |w| {
                w.usize(self.horizon);
                w.usize(self.actions);
                write_shape(w, self.shape);
                w.f64s(&self.rewards);
                w.f64s(self.returns.values());
                w.bool(self.truncate);
                w.f64(self.epsilon.start);
                w.f64(self.epsilon.end);
                w.u64(self.epsilon.decay_steps);
                w.u64s(&self.bucket_updates);
                w.u64(self.degenerate_count());
                w.bool(self.current.is_some());
                if let Some(c) = &self.current {
                    w.usizes(c);
                }
                w.usize(self.window.len());
                for e in self.window.entries() {
                    w.usizes(&e.state);
                    w.usize(e.action);
                    w.f64(e.reward);
                }
                let seed = self.rng.get_seed();
                for chunk in seed.chunks_exact(8) {
                    w.u64(u64::from_le_bytes(chunk.try_into().expect("8 bytes")));
                }
                w.u64(self.rng.get_stream());
                let pos = self.rng.get_word_pos();
                w.u64(pos as u64);
                w.u64((pos >> 64) as u64);
                self.state_models.iter().for_each(|m| m.write_snapshot(w));
                self.return_models.iter().for_each(|m| m.write_snapshot(w));
            })
        })
    }

    pub fn restore(bytes: &[u8]) -> Result<Self, CncError> {
        let mut r = snapshot::open_frame(bytes)?;
        let mut p = r.record(tag::ENGINE)?;
        let engine = Self::read_payload(&mut p)?;
        p.finish()?;
        r.finish()?;
        Ok(engine)
    }

    fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CncError> {
        let horizon = r.usize()?;
        let actions = r.usize()?;
        let shape = read_shape(r)?;
        let rewards = r.f64s()?;
        let returns = ReturnAlphabet::new(r.f64s()?)?;
        let truncate = r.bool()?;
        let epsilon = EpsilonSchedule {
            start: r.f64()?,
            end: r.f64()?,
            decay_steps: r.u64()?,
        };
        let bucket_updates = r.u64s()?;
        let buckets = returns.len() * actions;
        if bucket_updates.len() != buckets || actions == 0 {
            return Err(SnapshotError::Invalid("bucket count does not match the return alphabet".into()).into());
        }
        let degenerate = r.u64()?;
        let current = if r.bool()? { Some(r.usizes()?) } else { None };
        let n = r.usize()?;
        let mut entries = Vec::with_capacity(n.min(horizon));
        for _ in 0..n {
            let state = r.usizes()?;
            let action = r.usize()?;
            let reward = r.f64()?;
            if action >= actions {
                return Err(SnapshotError::Invalid("window action out of range".into()).into());
            }
            entries.push(LaggedEntry { state, action, reward });
        }
        let window = LaggedWindow::restore(horizon, entries)?;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&r.u64()?.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.u64()?);
        let lo = r.u64()? as u128;
        let hi = r.u64()? as u128;
        rng.set_word_pos(lo | hi << 64);
        let state_models = (0..buckets)
            .map(|_| snapshot::read_state(r))
            .collect::<Result<Vec<_>, _>>()?;
        let return_models = (0..actions)
            .map(|_| snapshot::read_sequential(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            horizon,
            actions,
            shape,
            rewards,
            returns,
            truncate,
            epsilon,
            state_models,
            return_models,
            bucket_updates,
            window,
            current,
            rng,
            degenerate: AtomicU64::new(degenerate),
        })
    }
}

fn write_shape(w: &mut SnapshotWriter, shape: ObservationShape) {
    match shape {
        ObservationShape::Atomic { states } => {
            w.u8(0);
            w.usize(states);
        }
        ObservationShape::Grid(g) => {
            w.u8(1);
            w.usize(g.width);
            w.usize(g.height);
            w.usize(g.alphabet);
        }
    }
}

fn read_shape(r: &mut SnapshotReader<'_>) -> Result<ObservationShape, CncError> {
    match r.u8()? {
        0 => Ok(ObservationShape::Atomic { states: r.usize()? }),
        1 => {
            let (w, h, k) = (r.usize()?, r.usize()?, r.usize()?);
            let g = GridLayout::new(w, h, k)?;
            Ok(ObservationShape::Grid(g))
        }
        other => Err(SnapshotError::Invalid(format!("unknown observation shape {other}")).into()),
    }
}

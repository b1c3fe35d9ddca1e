use rand::seq::index::sample;
use rand::Rng as _;

use super::augment::build_augmented_chain;
use crate::envs::{ExplicitMdp, TabularPolicy, Transition};
use crate::rng::Rng;

/// Reward values the generator draws from.
const REWARD_POOL: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

/// Bounds for [`random_mdp`]. Outcome and policy supports are kept small
/// so that snake chains stay in the thousands of windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMdpParams {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_rewards: usize,
    /// Most `(s', r)` outcomes per `(s, a)`.
    pub max_outcomes: usize,
    /// Most actions with positive policy probability per state.
    pub policy_support: usize,
}

impl Default for RandomMdpParams {
    fn default() -> Self {
        Self {
            max_states: 6,
            max_actions: 3,
            max_rewards: 3,
            max_outcomes: 2,
            policy_support: 2,
        }
    }
}

/// `n` positive weights summing to one.
fn simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// A random sparse MDP with a random stochastic policy attached.
pub fn random_mdp(rng: &mut Rng, params: &RandomMdpParams) -> ExplicitMdp {
    let states = rng.random_range(2..=params.max_states.max(2));
    let actions = rng.random_range(1..=params.max_actions.max(1));
    let num_rewards = rng.random_range(1..=params.max_rewards.clamp(1, REWARD_POOL.len()));
    let mut rewards: Vec<f64> = sample(rng, REWARD_POOL.len(), num_rewards)
        .into_iter()
        .map(|i| REWARD_POOL[i])
        .collect();
    rewards.sort_by(f64::total_cmp);

    let kernel = (0..states * actions)
        .map(|_| {
            let k = rng.random_range(1..=params.max_outcomes.max(1));
            let outcomes = sample(rng, states * num_rewards, k.min(states * num_rewards));
            let probs = simplex(rng, outcomes.len());
            let mut row: Vec<Transition> = outcomes
                .into_iter()
                .zip(probs)
                .map(|(o, prob)| Transition {
                    next: o / num_rewards,
                    reward: o % num_rewards,
                    prob,
                })
                .collect();
            // absorb rounding so the row sums to one exactly enough
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            row[0].prob += 1.0 - sum;
            row
        })
        .collect();

    let policy_rows = (0..states)
        .map(|_| {
            let k = rng.random_range(1..=params.policy_support.clamp(1, actions));
            let mut row = vec![0.0; actions];
            for (a, p) in sample(rng, actions, k).into_iter().zip(simplex(rng, k)) {
                row[a] = p;
            }
            row
        })
        .collect();
    let policy = TabularPolicy::new(policy_rows).expect("valid random policy");
    let start = rng.random_range(0..states);
    ExplicitMdp::new(states, actions, rewards, start, kernel, Some(policy)).expect("valid random MDP")
}

/// Draws until the augmented chain is irreducible and aperiodic.
pub fn random_ir_ap_mdp(rng: &mut Rng, params: &RandomMdpParams) -> ExplicitMdp {
    loop {
        let mdp = random_mdp(rng, params);
        if let Ok(chain) = build_augmented_chain(&mdp, mdp.policy()) {
            let props = chain.properties();
            if props.irreducible && props.aperiodic {
                return mdp;
            }
        }
    }
}

//! Tabular MDPs with an explicit kernel, and their text format.
//!
//! ```text
//! # two states, one action
//! states 2
//! actions 1
//! rewards 0 1
//! start 0
//! # s a s' r p
//! 0 0 1 1 1
//! 1 0 0 0 1/2
//! 1 0 1 1 1/2
//! # optional policy rows: pi s a p (uniform where absent)
//! pi 0 0 1
//! ```
//!
//! Probabilities are decimals or fractions `n/d`. Each `(s, a)` row must
//! be present and sum to 1 within 1e-12.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{sample_index, EnvError, Environment, Step, TabularPolicy};
use crate::rng::Rng;

const ROW_TOLERANCE: f64 = 1e-12;

/// One outcome of `μ(s', r | s, a)`; `reward` indexes the MDP's reward set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMdp {
    states: usize,
    actions: usize,
    rewards: Vec<f64>,
    start: usize,
    kernel: Vec<Vec<Transition>>,
    policy: TabularPolicy,
}

impl ExplicitMdp {
    /// `kernel[s * actions + a]` lists the outcomes of `(s, a)`.
    pub fn new(
        states: usize,
        actions: usize,
        rewards: Vec<f64>,
        start: usize,
        kernel: Vec<Vec<Transition>>,
        policy: Option<TabularPolicy>,
    ) -> Result<Self, EnvError> {
        let invalid = |m: String| EnvError::InvalidParameters(m);
        if states == 0 || actions == 0 || rewards.is_empty() {
            return Err(invalid("an MDP needs states, actions and rewards".into()));
        }
        if start >= states {
            return Err(EnvError::InvalidState { state: start, states });
        }
        if kernel.len() != states * actions {
            return Err(invalid(format!("kernel has {} rows, expected {}", kernel.len(), states * actions)));
        }
        for (i, row) in kernel.iter().enumerate() {
            let (s, a) = (i / actions, i % actions);
            for t in row {
                if t.next >= states || t.reward >= rewards.len() || !(t.prob > 0.0 && t.prob <= 1.0) {
                    return Err(invalid(format!("bad transition {t:?} from ({s}, {a})")));
                }
            }
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid(format!("row ({s}, {a}) sums to {sum}")));
            }
        }
        let policy = policy.unwrap_or_else(|| TabularPolicy::uniform(states, actions));
        if policy.num_states() != states || super::Policy::num_actions(&policy) != actions {
            return Err(invalid("policy shape does not match the MDP".into()));
        }
        Ok(Self {
            states,
            actions,
            rewards,
            start,
            kernel,
            policy,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }

    pub fn with_policy(mut self, policy: TabularPolicy) -> Result<Self, EnvError> {
        if policy.num_states() != self.states || super::Policy::num_actions(&policy) != self.actions {
            return Err(EnvError::InvalidPolicy("policy shape does not match the MDP".into()));
        }
        self.policy = policy;
        Ok(self)
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Transition] {
        &self.kernel[state * self.actions + action]
    }

    pub fn expected_reward(&self, state: usize, action: usize) -> f64 {
        self.outcomes(state, action)
            .iter()
            .map(|t| t.prob * self.rewards[t.reward])
            .sum()
    }

    /// The same MDP with every reward multiplied by `factor`.
    pub fn scale_rewards(&self, factor: f64) -> Self {
        Self {
            rewards: self.rewards.iter().map(|r| r * factor).collect(),
            ..self.clone()
        }
    }

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        Parser::default().run(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Text form that [`parse`](Self::parse) reads back to an identical
    /// MDP.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.states);
        let _ = writeln!(out, "actions {}", self.actions);
        let rewards: Vec<String> = self.rewards.iter().map(|r| format!("{r:?}")).collect();
        let _ = writeln!(out, "rewards {}", rewards.join(" "));
        let _ = writeln!(out, "start {}", self.start);
        for s in 0..self.states {
            for a in 0..self.actions {
                for t in self.outcomes(s, a) {
                    let _ = writeln!(out, "{s} {a} {} {:?} {:?}", t.next, self.rewards[t.reward], t.prob);
                }
            }
        }
        for s in 0..self.states {
            for (a, p) in self.policy.row(s).iter().enumerate() {
                if *p > 0.0 {
                    let _ = writeln!(out, "pi {s} {a} {p:?}");
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnvError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_prob(token: &str) -> Option<f64> {
    let p = match token.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?,
        None => token.parse::<f64>().ok()?,
    };
    p.is_finite().then_some(p)
}

#[derive(Default)]
struct Parser {
    states: Option<usize>,
    actions: Option<usize>,
    rewards: Option<Vec<f64>>,
    start: Option<usize>,
    kernel: Vec<Vec<Transition>>,
    row_lines: Vec<usize>,
    policy: Vec<Option<Vec<f64>>>,
}

impl Parser {
    fn run(mut self, text: &str) -> Result<ExplicitMdp, EnvError> {
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            self.line(line, &tokens)
                .map_err(|message| EnvError::Parse { line, message })?;
        }
        let fail = |line: usize, message: String| EnvError::Parse { line, message };
        let (states, actions, rewards) = match (self.states, self.actions, self.rewards.take()) {
            (Some(s), Some(a), Some(r)) => (s, a, r),
            _ => return Err(fail(last_line, "missing `states`, `actions` or `rewards` header".into())),
        };
        for (i, row) in self.kernel.iter().enumerate() {
            let (s, a) = (i / actions, i % actions);
            if row.is_empty() {
                return Err(fail(last_line, format!("no transitions for state {s}, action {a}")));
            }
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(fail(self.row_lines[i], format!("probabilities for state {s}, action {a} sum to {sum}")));
            }
        }
        let rows: Vec<Vec<f64>> = self
            .policy
            .iter()
            .map(|r| r.clone().unwrap_or_else(|| vec![1.0; actions]))
            .collect();
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if self.policy[s].is_some() && (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(fail(last_line, format!("policy for state {s} sums to {sum}")));
            }
        }
        let policy = TabularPolicy::new(rows)?;
        ExplicitMdp::new(states, actions, rewards, self.start.unwrap_or(0), self.kernel, Some(policy))
            .map_err(|e| fail(last_line, e.to_string()))
    }

    fn dims(&self) -> Result<(usize, usize, &[f64]), String> {
        match (self.states, self.actions, self.rewards.as_deref()) {
            (Some(s), Some(a), Some(r)) => Ok((s, a, r)),
            _ => Err("transition before the `states`, `actions` and `rewards` header".into()),
        }
    }

    fn index(token: &str, bound: usize, what: &str) -> Result<usize, String> {
        let i: usize = token.parse().map_err(|_| format!("`{token}` is not a {what} index"))?;
        if i >= bound {
            return Err(format!("{what} {i} is outside 0..{bound}"));
        }
        Ok(i)
    }

    fn ensure_tables(&mut self) {
        if let (Some(s), Some(a)) = (self.states, self.actions) {
            if self.kernel.is_empty() {
                self.kernel = vec![Vec::new(); s * a];
                self.row_lines = vec![0; s * a];
                self.policy = vec![None; s];
            }
        }
    }

    fn line(&mut self, line: usize, tokens: &[&str]) -> Result<(), String> {
        let count = |t: &str| t.parse::<usize>().ok().filter(|&n| n > 0).ok_or(format!("`{t}` is not a positive count"));
        match tokens {
            ["states", n] => {
                self.states = Some(count(n)?);
                self.ensure_tables();
            }
            ["actions", n] => {
                self.actions = Some(count(n)?);
                self.ensure_tables();
            }
            ["rewards", values @ ..] if !values.is_empty() => {
                let r = values
                    .iter()
                    .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or(format!("`{v}` is not a reward")))
                    .collect::<Result<Vec<_>, _>>()?;
                self.rewards = Some(r);
            }
            ["start", s] => {
                let (states, _, _) = self.dims()?;
                self.start = Some(Self::index(s, states, "state")?);
            }
            ["pi", s, a, p] => {
                let (states, actions, _) = self.dims()?;
                let s = Self::index(s, states, "state")?;
                let a = Self::index(a, actions, "action")?;
                let p = parse_prob(p).filter(|p| (0.0..=1.0).contains(p)).ok_or(format!("`{p}` is not a probability"))?;
                self.policy[s].get_or_insert_with(|| vec![0.0; actions])[a] = p;
            }
            [s, a, next, r, p] => {
                let (states, actions, rewards) = self.dims()?;
                let s = Self::index(s, states, "state")?;
                let a = Self::index(a, actions, "action")?;
                let next = Self::index(next, states, "state")?;
                let value: f64 = r.parse().map_err(|_| format!("`{r}` is not a reward"))?;
                let reward = rewards
                    .iter()
                    .position(|&x| (x - value).abs() <= 1e-12)
                    .ok_or(format!("reward {value} is not declared"))?;
                let prob = parse_prob(p)
                    .filter(|p| *p > 0.0 && *p <= 1.0)
                    .ok_or(format!("`{p}` is not a positive probability"))?;
                let row = &mut self.kernel[s * actions + a];
                if row.iter().any(|t| t.next == next && t.reward == reward) {
                    return Err(format!("duplicate transition {s} {a} -> {next} with reward {value}"));
                }
                row.push(Transition { next, reward, prob });
                self.row_lines[s * actions + a] = line;
            }
            _ => return Err(format!("cannot parse `{}`", tokens.join(" "))),
        }
        Ok(())
    }
}

/// An [`ExplicitMdp`] run as a continuing environment.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: Arc<ExplicitMdp>,
    state: usize,
}

impl TabularEnv {
    pub fn new(mdp: Arc<ExplicitMdp>) -> Self {
        let state = mdp.start();
        Self { mdp, state }
    }

    pub fn mdp(&self) -> &ExplicitMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn rewards(&self) -> &[f64] {
        self.mdp.rewards()
    }

    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step, EnvError> {
        if action >= self.mdp.num_actions() {
            return Err(EnvError::InvalidAction {
                action,
                actions: self.mdp.num_actions(),
            });
        }
        let outcomes = self.mdp.outcomes(self.state, action);
        let probs: Vec<f64> = outcomes.iter().map(|t| t.prob).collect();
        let t = outcomes[sample_index(&probs, rng)];
        self.state = t.next;
        Ok(Step {
            reward: self.mdp.rewards()[t.reward],
            episode_end: false,
        })
    }

    fn reset(&mut self, _rng: &mut Rng) {
        self.state = self.mdp.start();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = "\
# comment line
states 2
actions 1
rewards 0 1
start 1
0 0 0 0 1    # self loop
1 0 1 1 1
";

    #[test]
    fn parses_headers_and_rows() {
        let mdp = ExplicitMdp::parse(TWO_STATE).unwrap();
        assert_eq!((mdp.num_states(), mdp.num_actions(), mdp.start()), (2, 1, 1));
        assert_eq!(mdp.expected_reward(1, 0), 1.0);
        assert_eq!(mdp.policy().row(0), &[1.0]);
    }

    #[test]
    fn fractions_are_accepted() {
        let text = "states 1\nactions 1\nrewards 0 1\n0 0 0 0 1/3\n0 0 0 1 2/3\n";
        let mdp = ExplicitMdp::parse(text).unwrap();
        assert!((mdp.expected_reward(0, 0) - 2.0 / 3.0).abs() < 1e-15);
    }

    fn parse_error_line(text: &str) -> usize {
        match ExplicitMdp::parse(text) {
            Err(EnvError::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse_error_line("states 1\nactions 1\nrewards 0\n0 0 0 0 0.999\n"), 4);
        assert_eq!(parse_error_line("states 1\nactions 1\nrewards 0\n0 0 3 0 1\n"), 4);
        assert_eq!(parse_error_line("states 1\nactions 1\nrewards 0\n0 0 0 5 1\n"), 4);
        assert_eq!(parse_error_line("0 0 0 0 1\n"), 1);
        assert_eq!(parse_error_line("states 2\nactions 1\nrewards 0\n0 0 0 0 1\n"), 4);
        assert_eq!(parse_error_line("states 1\nactions 1\nrewards 0\nbogus\n"), 4);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let text = "states 2\nactions 2\nrewards -1 0.1 2.5\nstart 0\n\
                    0 0 1 0.1 1/3\n0 0 0 -1 2/3\n0 1 1 2.5 1\n1 0 0 0.1 1\n1 1 1 -1 0.7\n1 1 0 2.5 0.3\n\
                    pi 0 0 1/7\npi 0 1 6/7\n";
        let mdp = ExplicitMdp::parse(text).unwrap();
        let again = ExplicitMdp::parse(&mdp.to_text()).unwrap();
        assert_eq!(mdp, again);
    }

    #[test]
    fn tabular_env_follows_the_kernel() {
        let mdp = Arc::new(ExplicitMdp::parse(TWO_STATE).unwrap());
        let mut env = TabularEnv::new(mdp);
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Env);
        let step = env.step(0, &mut rng).unwrap();
        assert_eq!((env.state(), step.reward), (1, 1.0));
        assert!(env.step(1, &mut rng).is_err());
    }
}

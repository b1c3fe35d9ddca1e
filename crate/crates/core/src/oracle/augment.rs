use std::collections::VecDeque;
use std::io::{self, Write};

use rustc_hash::FxHashMap;

use super::chain::{check_properties, ChainProperties, SparseMatrix};
use super::stationary::{stationary, SolveMethod};
use super::{OracleError, QTable};
use crate::cnc::ReturnAlphabet;
use crate::envs::{EnvError, ExplicitMdp, Policy, TabularPolicy};

/// Default bound on the number of snake windows.
pub const DEFAULT_WINDOW_CAP: usize = 1_000_000;

/// `(a, s, r)`: the action taken, the state it led to, and the reward index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub action: usize,
    pub state: usize,
    pub reward: usize,
}

/// The chain `Y_t = (A_t, S_t, R_t)` over triples reachable from the start
/// state, with `P(y' | y) = π(a' | s) · μ(s', r' | s, a')`.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    triples: Vec<Triple>,
    index: FxHashMap<Triple, usize>,
    matrix: SparseMatrix,
    rewards: Vec<f64>,
    states: usize,
    actions: usize,
}

fn check_policy(mdp: &ExplicitMdp, policy: &TabularPolicy) -> Result<(), OracleError> {
    if policy.num_states() != mdp.num_states() || Policy::num_actions(policy) != mdp.num_actions() {
        return Err(EnvError::InvalidPolicy("policy shape does not match the MDP".into()).into());
    }
    Ok(())
}

/// Breadth-first closure of `next` from `seeds`, returned sorted.
fn reachable<T, F>(seeds: Vec<T>, mut next: F) -> Vec<T>
where
    T: Copy + Ord + std::hash::Hash,
    F: FnMut(T, &mut Vec<T>),
{
    let mut seen: FxHashMap<T, ()> = FxHashMap::default();
    let mut queue = VecDeque::new();
    for t in seeds {
        if seen.insert(t, ()).is_none() {
            queue.push_back(t);
        }
    }
    let mut buf = Vec::new();
    while let Some(t) = queue.pop_front() {
        buf.clear();
        next(t, &mut buf);
        for &u in &buf {
            if seen.insert(u, ()).is_none() {
                queue.push_back(u);
            }
        }
    }
    let mut out: Vec<T> = seen.into_keys().collect();
    out.sort();
    out
}

fn triple_successors(mdp: &ExplicitMdp, policy: &TabularPolicy, state: usize, out: &mut Vec<(Triple, f64)>) {
    for a in 0..mdp.num_actions() {
        let pa = policy.prob(state, a);
        if pa == 0.0 {
            continue;
        }
        for t in mdp.outcomes(state, a) {
            out.push((
                Triple {
                    action: a,
                    state: t.next,
                    reward: t.reward,
                },
                pa * t.prob,
            ));
        }
    }
}

pub fn build_augmented_chain(mdp: &ExplicitMdp, policy: &TabularPolicy) -> Result<AugmentedChain, OracleError> {
    check_policy(mdp, policy)?;
    let mut scratch = Vec::new();
    triple_successors(mdp, policy, mdp.start(), &mut scratch);
    let seeds = scratch.iter().map(|&(t, _)| t).collect();
    let triples = reachable(seeds, |y: Triple, out| {
        let mut succ = Vec::new();
        triple_successors(mdp, policy, y.state, &mut succ);
        out.extend(succ.into_iter().map(|(t, _)| t));
    });
    if !triples.iter().any(|t| t.state == mdp.start()) {
        return Err(OracleError::UnreachableStart(mdp.start()));
    }
    let index: FxHashMap<Triple, usize> = triples.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let rows = triples
        .iter()
        .map(|y| {
            scratch.clear();
            triple_successors(mdp, policy, y.state, &mut scratch);
            scratch.iter().map(|(t, p)| (index[t], *p)).collect()
        })
        .collect();
    Ok(AugmentedChain {
        triples,
        index,
        matrix: SparseMatrix::from_rows(rows),
        rewards: mdp.rewards().to_vec(),
        states: mdp.num_states(),
        actions: mdp.num_actions(),
    })
}

impl AugmentedChain {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, i: usize) -> Triple {
        self.triples[i]
    }

    pub fn index_of(&self, t: Triple) -> Option<usize> {
        self.index.get(&t).copied()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn properties(&self) -> ChainProperties {
        check_properties(&self.matrix)
    }
}

/// The chain `X_t = (A_t, S_t)` with rewards marginalized out.
#[derive(Debug, Clone)]
pub struct BaseChain {
    pub pairs: Vec<(usize, usize)>,
    pub matrix: SparseMatrix,
}

pub fn build_base_chain(mdp: &ExplicitMdp, policy: &TabularPolicy) -> Result<BaseChain, OracleError> {
    check_policy(mdp, policy)?;
    let successors = |state: usize| {
        let mut out = Vec::new();
        for a in 0..mdp.num_actions() {
            let pa = policy.prob(state, a);
            if pa > 0.0 {
                out.extend(mdp.outcomes(state, a).iter().map(|t| ((a, t.next), pa * t.prob)));
            }
        }
        out
    };
    let seeds = successors(mdp.start()).into_iter().map(|(x, _)| x).collect();
    let pairs = reachable(seeds, |(_, s): (usize, usize), out| {
        out.extend(successors(s).into_iter().map(|(x, _)| x));
    });
    let index: FxHashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let rows = pairs
        .iter()
        .map(|&(_, s)| successors(s).into_iter().map(|(x, p)| (index[&x], p)).collect())
        .collect();
    Ok(BaseChain {
        pairs,
        matrix: SparseMatrix::from_rows(rows),
    })
}

/// Chain over windows `W_t = (Y_t, …, Y_{t+m})` of positive probability.
#[derive(Debug, Clone)]
pub struct SnakeChain {
    horizon: usize,
    windows: Vec<u32>,
    matrix: SparseMatrix,
}

impl SnakeChain {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.windows.len() / (self.horizon + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Triple indices of window `i`, oldest first.
    pub fn window(&self, i: usize) -> &[u32] {
        let k = self.horizon + 1;
        &self.windows[i * k..(i + 1) * k]
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn properties(&self) -> ChainProperties {
        check_properties(&self.matrix)
    }
}

/// Exact number of positive-probability windows of length `m + 1`.
pub fn count_windows(chain: &AugmentedChain, m: usize) -> u128 {
    let n = chain.len();
    let mut paths = vec![1u128; n];
    for _ in 0..m {
        paths = (0..n)
            .map(|i| chain.matrix.row(i).fold(0u128, |acc, (j, _)| acc.saturating_add(paths[j])))
            .collect();
    }
    paths.iter().fold(0u128, |acc, &p| acc.saturating_add(p))
}

pub fn build_snake_chain(chain: &AugmentedChain, m: usize, cap: usize) -> Result<SnakeChain, OracleError> {
    if m == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    let total = count_windows(chain, m);
    if total > cap as u128 {
        return Err(OracleError::TooLarge { windows: total, cap });
    }
    let k = m + 1;
    let mut windows = Vec::with_capacity(total as usize * k);
    let mut path = Vec::with_capacity(k);
    fn extend(chain: &AugmentedChain, k: usize, path: &mut Vec<u32>, out: &mut Vec<u32>) {
        if path.len() == k {
            out.extend_from_slice(path);
            return;
        }
        let last = *path.last().expect("seeded path") as usize;
        for (j, _) in chain.matrix.row(last) {
            path.push(j as u32);
            extend(chain, k, path, out);
            path.pop();
        }
    }
    for y in 0..chain.len() {
        path.clear();
        path.push(y as u32);
        extend(chain, k, &mut path, &mut windows);
    }
    let count = windows.len() / k;
    let index: FxHashMap<&[u32], usize> = windows.chunks_exact(k).enumerate().map(|(i, w)| (w, i)).collect();
    let mut key = vec![0u32; k];
    let rows = windows
        .chunks_exact(k)
        .map(|w| {
            key[..m].copy_from_slice(&w[1..]);
            chain
                .matrix
                .row(w[m] as usize)
                .map(|(j, p)| {
                    key[m] = j as u32;
                    (index[key.as_slice()], p)
                })
                .collect()
        })
        .collect();
    debug_assert_eq!(count as u128, total);
    Ok(SnakeChain {
        horizon: m,
        windows,
        matrix: SparseMatrix::from_rows(rows),
    })
}

/// Stationary law of a snake chain and the joint `ν(s, a, z)` it carries:
/// `s` is the state of the window's first triple, `a` the action of the
/// second, and `z` the sum of the rewards of triples `1..=m`.
#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub nu: Vec<f64>,
    pub residual: f64,
    pub method: SolveMethod,
    pub properties: ChainProperties,
    /// Marginal of `nu` on the window's first triple, indexed like the
    /// augmented chain.
    pub first_block: Vec<f64>,
    returns: ReturnAlphabet,
    states: usize,
    actions: usize,
    joint: Vec<f64>,
}

pub fn solve_snake(snake: &SnakeChain, chain: &AugmentedChain) -> Result<StationaryResult, OracleError> {
    let properties = snake.properties();
    let solved = stationary(&snake.matrix)?;
    let window_return = |w: &[u32]| -> f64 {
        w[1..]
            .iter()
            .map(|&y| chain.rewards[chain.triples[y as usize].reward])
            .sum()
    };
    let zs: Vec<f64> = (0..snake.len()).map(|i| window_return(snake.window(i))).collect();
    let returns = ReturnAlphabet::new(zs.clone()).expect("finite, non-empty returns");
    let (states, actions, nz) = (chain.states, chain.actions, returns.len());
    let mut joint = vec![0.0; states * actions * nz];
    let mut first_block = vec![0.0; chain.len()];
    for (i, (&p, &z)) in solved.distribution.iter().zip(&zs).enumerate() {
        let w = snake.window(i);
        let s = chain.triples[w[0] as usize].state;
        let a = chain.triples[w[1] as usize].action;
        let zi = returns.index_of(z).expect("return drawn from the alphabet");
        joint[(s * actions + a) * nz + zi] += p;
        first_block[w[0] as usize] += p;
    }
    Ok(StationaryResult {
        nu: solved.distribution,
        residual: solved.residual,
        method: solved.method,
        properties,
        first_block,
        returns,
        states,
        actions,
        joint,
    })
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl StationaryResult {
    pub fn returns(&self) -> &ReturnAlphabet {
        &self.returns
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    /// `ν(S₀ = s, A₁ = a, Z = z)`.
    pub fn joint(&self, s: usize, a: usize, z: usize) -> f64 {
        self.joint[(s * self.actions + a) * self.returns.len() + z]
    }

    pub fn nu_sa(&self, s: usize, a: usize) -> f64 {
        (0..self.returns.len()).map(|z| self.joint(s, a, z)).sum()
    }

    pub fn nu_za(&self, z: usize, a: usize) -> f64 {
        (0..self.states).map(|s| self.joint(s, a, z)).sum()
    }

    pub fn nu_a(&self, a: usize) -> f64 {
        (0..self.returns.len()).map(|z| self.nu_za(z, a)).sum()
    }

    pub fn z_given_a(&self, z: usize, a: usize) -> Option<f64> {
        ratio(self.nu_za(z, a), self.nu_a(a))
    }

    pub fn s_given_za(&self, s: usize, z: usize, a: usize) -> Option<f64> {
        ratio(self.joint(s, a, z), self.nu_za(z, a))
    }

    pub fn z_given_sa(&self, z: usize, s: usize, a: usize) -> Option<f64> {
        ratio(self.joint(s, a, z), self.nu_sa(s, a))
    }

    /// `ν(z | s, a)` rows with columns `s,a,z,value`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "s,a,z,value")?;
        for s in 0..self.states {
            for a in 0..self.actions {
                for zi in 0..self.returns.len() {
                    if let Some(p) = self.z_given_sa(zi, s, a) {
                        writeln!(w, "{s},{a},{:?},{p:?}", self.returns.value(zi))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Q(s,a) = Σ_z z·ν(s|z,a)ν(z|a) / Σ_z' ν(s|z',a)ν(z'|a)`, undefined where
/// `(s, a)` has no stationary mass.
pub fn q_via_nu(result: &StationaryResult) -> QTable {
    let mut q = QTable::new(result.states, result.actions);
    for a in 0..result.actions {
        let pz: Vec<Option<f64>> = (0..result.returns.len()).map(|z| result.z_given_a(z, a)).collect();
        for s in 0..result.states {
            let (mut num, mut den) = (0.0, 0.0);
            for (zi, pz) in pz.iter().enumerate() {
                let (Some(pz), Some(ps)) = (pz, result.s_given_za(s, zi, a)) else {
                    continue;
                };
                let w = ps * pz;
                num += result.returns.value(zi) * w;
                den += w;
            }
            if den > 0.0 {
                q.set(s, a, num / den);
            }
        }
    }
    q
}

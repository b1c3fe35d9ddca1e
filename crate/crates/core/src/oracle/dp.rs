use super::QTable;
use crate::envs::{ExplicitMdp, TabularPolicy};

/// Backward induction of the m-step return:
/// `Q₁(s,a) = E[R | s,a]`, `Q_{k+1}(s,a) = Σ μ(s',r | s,a) (r + Σ_a' π(a'|s') Q_k(s',a'))`.
pub fn q_via_dp(mdp: &ExplicitMdp, policy: &TabularPolicy, m: usize) -> QTable {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let rewards = mdp.rewards();
    let mut q = vec![0.0; ns * na];
    for _ in 0..m {
        let v: Vec<f64> = (0..ns)
            .map(|s| (0..na).map(|a| policy.prob(s, a) * q[s * na + a]).sum())
            .collect();
        q = (0..ns * na)
            .map(|i| {
                mdp.outcomes(i / na, i % na)
                    .iter()
                    .map(|t| t.prob * (rewards[t.reward] + v[t.next]))
                    .sum()
            })
            .collect();
    }
    let mut table = QTable::new(ns, na);
    for (i, v) in q.into_iter().enumerate() {
        table.set(i / na, i % na, v);
    }
    table
}

/// Adds `p` at `z`, merging returns that agree to rounding.
fn add_mass(dist: &mut Vec<(f64, f64)>, z: f64, p: f64) {
    let i = dist.partition_point(|&(v, _)| v < z - 1e-9);
    match dist.get_mut(i) {
        Some((v, mass)) if (*v - z).abs() < 1e-9 => *mass += p,
        _ => dist.insert(i, (z, p)),
    }
}

/// Law of the m-step return from each `(s, a)`, as ascending `(z, prob)`
/// lists indexed `s * actions + a`.
pub fn return_distribution(mdp: &ExplicitMdp, policy: &TabularPolicy, m: usize) -> Vec<Vec<(f64, f64)>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let rewards = mdp.rewards();
    let mut d: Vec<Vec<(f64, f64)>> = vec![vec![(0.0, 1.0)]; ns * na];
    for _ in 0..m {
        // law of the remaining return from each state
        let from_state: Vec<Vec<(f64, f64)>> = (0..ns)
            .map(|s| {
                let mut out = Vec::new();
                for a in 0..na {
                    let pa = policy.prob(s, a);
                    if pa > 0.0 {
                        for &(z, p) in &d[s * na + a] {
                            add_mass(&mut out, z, pa * p);
                        }
                    }
                }
                out
            })
            .collect();
        d = (0..ns * na)
            .map(|i| {
                let mut out = Vec::new();
                for t in mdp.outcomes(i / na, i % na) {
                    for &(z, p) in &from_state[t.next] {
                        add_mass(&mut out, rewards[t.reward] + z, t.prob * p);
                    }
                }
                out
            })
            .collect();
    }
    d
}

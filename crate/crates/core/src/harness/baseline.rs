use rustc_hash::FxHashSet;

/// First-visit Monte Carlo estimate of `Q(s, a)` over a tabular space.
#[derive(Debug, Clone, PartialEq)]
pub struct McBaseline {
    actions: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl McBaseline {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            actions,
            sums: vec![0.0; states * actions],
            counts: vec![0; states * actions],
        }
    }

    /// Folds in one complete episode given as `(state, action, reward)`
    /// steps. Each pair is credited once, with the return from its first
    /// occurrence to the end of the episode.
    pub fn update(&mut self, episode: &[(usize, usize, f64)]) {
        let mut to_go = vec![0.0; episode.len() + 1];
        for (i, &(_, _, r)) in episode.iter().enumerate().rev() {
            to_go[i] = r + to_go[i + 1];
        }
        let mut seen = FxHashSet::default();
        for (i, &(s, a, _)) in episode.iter().enumerate() {
            if seen.insert((s, a)) {
                let k = s * self.actions + a;
                self.sums[k] += to_go[i];
                self.counts[k] += 1;
            }
        }
    }

    /// `None` until the pair has been visited.
    pub fn estimate(&self, s: usize, a: usize) -> Option<f64> {
        let k = s * self.actions + a;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.actions + a]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_the_first_visit_counts() {
        let mut mc = McBaseline::new(3, 2);
        mc.update(&[(0, 1, 0.0), (2, 0, 0.0), (0, 1, 1.0)]);
        assert_eq!(mc.visits(0, 1), 1);
        assert_eq!(mc.estimate(0, 1), Some(1.0));
        assert_eq!(mc.estimate(1, 0), None);
    }

    #[test]
    fn returns_are_averaged_across_episodes() {
        let mut mc = McBaseline::new(1, 1);
        mc.update(&[(0, 0, 1.0)]);
        mc.update(&[(0, 0, -1.0), (0, 0, 0.0)]);
        mc.update(&[(0, 0, 1.0)]);
        assert_eq!(mc.estimate(0, 0), Some(1.0 / 3.0));
    }
}

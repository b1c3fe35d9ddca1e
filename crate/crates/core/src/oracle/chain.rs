use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

/// Row-stochastic matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, probability)` lists. Entries with the
    /// same column are merged; zero entries are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, p) in row {
                assert!(c < n, "column {c} outside a {n}x{n} matrix");
                if p == 0.0 {
                    continue;
                }
                if last == Some(c) {
                    *vals.last_mut().expect("merged entry") += p;
                } else {
                    cols.push(c as u32);
                    vals.push(p);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().map(|&c| c as usize).zip(self.vals[lo..hi].iter().copied())
    }

    /// Largest `|Σ_j P_ij − 1|`.
    pub fn max_row_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `v P`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (j, p) in self.row(i) {
                    out[j] += vi * p;
                }
            }
        }
        out
    }

    /// `‖v P − v‖₁`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        self.left_mul(v).iter().zip(v).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Structural properties of a finite chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainProperties {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// On a finite chain, the same as irreducible.
    pub positive_recurrent: bool,
    /// gcd of return times of the chain's states when irreducible, 0 when
    /// some state can never return to itself.
    pub period: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Irreducibility from strong connectivity of the positive-transition
/// graph; periods from BFS levels inside each strongly connected
/// component (the gcd of `level(u) + 1 − level(v)` over internal edges).
pub fn check_properties(p: &SparseMatrix) -> ChainProperties {
    let n = p.dim();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, p.nnz());
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for (j, _) in p.row(i) {
            graph.add_edge(nodes[i], nodes[j], ());
        }
    }
    let sccs = tarjan_scc(&graph);
    let irreducible = sccs.len() == 1;

    let mut component = vec![usize::MAX; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    let mut overall = 0u64;
    let mut all_aperiodic = true;
    let mut level = vec![u64::MAX; n];
    for (c, members) in sccs.iter().enumerate() {
        let root = members[0].index();
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut g = 0u64;
        while let Some(u) = queue.pop_front() {
            for (v, _) in p.row(u) {
                if component[v] != c {
                    continue;
                }
                if level[v] == u64::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    g = gcd(g, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
        // g = 0: a single state with no self-loop never returns
        if g != 1 {
            all_aperiodic = false;
        }
        overall = if c == 0 { g } else { gcd(overall, g) };
    }
    ChainProperties {
        irreducible,
        aperiodic: all_aperiodic,
        positive_recurrent: irreducible,
        period: if irreducible { overall } else { 0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_two_cycle_is_periodic() {
        let p = SparseMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]);
        let props = check_properties(&p);
        assert!(props.irreducible && props.positive_recurrent);
        assert!(!props.aperiodic);
        assert_eq!(props.period, 2);
    }

    #[test]
    fn self_loop_makes_a_cycle_aperiodic() {
        let p = SparseMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]]);
        let props = check_properties(&p);
        assert!(props.irreducible && props.aperiodic);
        assert_eq!(props.period, 1);
    }

    #[test]
    fn disconnected_components_are_reducible() {
        let p = SparseMatrix::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)]]);
        assert!(!check_properties(&p).irreducible);
    }

    #[test]
    fn cycles_of_length_two_and_three_are_aperiodic() {
        // 0 -> 1 -> 0 and 0 -> 1 -> 2 -> 0
        let p = SparseMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 0.5), (2, 0.5)], vec![(0, 1.0)]]);
        assert!(check_properties(&p).aperiodic);
    }

    #[test]
    fn entries_merge_and_rows_check() {
        let p = SparseMatrix::from_rows(vec![vec![(0, 0.25), (0, 0.25), (1, 0.5)], vec![(1, 1.0), (0, 0.0)]]);
        assert_eq!(p.nnz(), 3);
        assert_eq!(p.max_row_error(), 0.0);
        assert_eq!(p.left_mul(&[1.0, 0.0]), vec![0.5, 0.5]);
    }
}

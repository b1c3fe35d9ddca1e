use std::collections::VecDeque;

use super::snapshot::{self, tag, SnapshotReader, SnapshotWriter};
use super::{Alphabet, CodingError, SequentialModel, Symbol};

const NONE: u32 = u32::MAX;
const LN_2: f64 = std::f64::consts::LN_2;

/// `ln(½·e^a + ½·e^b)`.
#[inline]
fn ln_half_mix(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p() - LN_2
}

/// Multi-alphabet context tree weighting over a symbol alphabet of size
/// `K`, conditioned on contexts drawn from an alphabet of size `C`.
///
/// Every node keeps a KT (Dirichlet ½) estimator of the symbols seen in
/// its context and the weighted block probability
/// `P_w = ½·P_e + ½·Π_children P_w` (leaves: `P_w = P_e`). Nodes are
/// created lazily; a missing node behaves as one with no data
/// (`P_e = P_w = 1`). All probabilities are stored as natural logs.
///
/// Contexts are passed most-recent-first; only the first `depth`
/// entries are used.
#[derive(Debug, Clone, PartialEq)]
pub struct CtwTree {
    alphabet: usize,
    context_alphabet: usize,
    depth: usize,
    counts: Vec<u32>,
    totals: Vec<u32>,
    log_pe: Vec<f64>,
    log_pw: Vec<f64>,
    children: Vec<u32>,
}

impl CtwTree {
    pub fn new(alphabet: usize, context_alphabet: usize, depth: usize) -> Result<Self, CodingError> {
        if alphabet == 0 || context_alphabet == 0 {
            return Err(CodingError::EmptyAlphabet);
        }
        let mut tree = Self {
            alphabet,
            context_alphabet,
            depth,
            counts: Vec::new(),
            totals: Vec::new(),
            log_pe: Vec::new(),
            log_pw: Vec::new(),
            children: Vec::new(),
        };
        tree.push_node();
        Ok(tree)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn context_alphabet_size(&self) -> usize {
        self.context_alphabet
    }

    pub fn node_count(&self) -> usize {
        self.totals.len()
    }

    /// Symbols seen so far (the root's count).
    pub fn history_len(&self) -> u64 {
        self.totals[0] as u64
    }

    /// `ln P_w` of the root: the log-probability of everything seen.
    pub fn log_block_prob(&self) -> f64 {
        self.log_pw[0]
    }

    fn push_node(&mut self) -> u32 {
        let id = self.totals.len() as u32;
        self.counts.extend(std::iter::repeat_n(0, self.alphabet));
        self.totals.push(0);
        self.log_pe.push(0.0);
        self.log_pw.push(0.0);
        self.children.extend(std::iter::repeat_n(NONE, self.context_alphabet));
        id
    }

    #[inline]
    fn child(&self, node: u32, c: usize) -> u32 {
        self.children[node as usize * self.context_alphabet + c]
    }

    fn children_log_pw(&self, node: u32) -> f64 {
        let base = node as usize * self.context_alphabet;
        self.children[base..base + self.context_alphabet]
            .iter()
            .filter(|&&c| c != NONE)
            .map(|&c| self.log_pw[c as usize])
            .sum()
    }

    fn check(&self, context: &[Symbol], x: Symbol) -> Result<(), CodingError> {
        if x >= self.alphabet {
            return Err(CodingError::SymbolOutOfRange {
                symbol: x,
                size: self.alphabet,
            });
        }
        if context.len() < self.depth {
            return Err(CodingError::ShapeMismatch {
                expected: self.depth,
                got: context.len(),
            });
        }
        if let Some(&c) = context[..self.depth].iter().find(|&&c| c >= self.context_alphabet) {
            return Err(CodingError::SymbolOutOfRange {
                symbol: c,
                size: self.context_alphabet,
            });
        }
        Ok(())
    }

    #[inline]
    fn kt_log_step(&self, node: Option<u32>, x: Symbol) -> f64 {
        let half_k = 0.5 * self.alphabet as f64;
        match node {
            Some(id) => {
                let id = id as usize;
                let c = self.counts[id * self.alphabet + x] as f64;
                let n = self.totals[id] as f64;
                ((c + 0.5) / (n + half_k)).ln()
            }
            None => (0.5 / half_k).ln(),
        }
    }

    /// `ln ρ(x | context)`, without modifying the tree.
    pub fn log_prob(&self, context: &[Symbol], x: Symbol) -> Result<f64, CodingError> {
        self.check(context, x)?;
        Ok(self.log_prob_unchecked(context, x))
    }

    fn log_prob_unchecked(&self, context: &[Symbol], x: Symbol) -> f64 {
        // existing nodes along the context path; None past the first gap
        let mut path = [NONE; 64];
        let path_len = self.depth + 1;
        let mut path_vec;
        let path: &mut [u32] = if path_len <= 64 {
            &mut path[..path_len]
        } else {
            path_vec = vec![NONE; path_len];
            &mut path_vec[..]
        };
        path[0] = 0;
        for d in 0..self.depth {
            if path[d] == NONE {
                break;
            }
            path[d + 1] = self.child(path[d], context[d]);
        }

        let mut child_old = 0.0;
        let mut child_new = 0.0;
        for d in (0..=self.depth).rev() {
            let node = (path[d] != NONE).then_some(path[d]);
            let (lpe, lpw, siblings) = match node {
                Some(id) => (
                    self.log_pe[id as usize],
                    self.log_pw[id as usize],
                    if d < self.depth { self.children_log_pw(id) } else { 0.0 },
                ),
                None => (0.0, 0.0, 0.0),
            };
            let new_pe = lpe + self.kt_log_step(node, x);
            let new_pw = if d == self.depth {
                new_pe
            } else {
                ln_half_mix(new_pe, siblings - child_old + child_new)
            };
            child_old = lpw;
            child_new = new_pw;
        }
        child_new - child_old
    }

    pub fn prob(&self, context: &[Symbol], x: Symbol) -> Result<f64, CodingError> {
        Ok(self.log_prob(context, x)?.exp())
    }

    /// Predictive distribution over the whole symbol alphabet.
    pub fn probs(&self, context: &[Symbol]) -> Result<Vec<f64>, CodingError> {
        self.check(context, 0)?;
        Ok((0..self.alphabet)
            .map(|x| self.log_prob_unchecked(context, x).exp())
            .collect())
    }

    pub fn update(&mut self, context: &[Symbol], x: Symbol) -> Result<(), CodingError> {
        self.check(context, x)?;
        let mut path = Vec::with_capacity(self.depth + 1);
        let mut node = 0u32;
        path.push(node);
        for &c in &context[..self.depth] {
            let mut next = self.child(node, c);
            if next == NONE {
                next = self.push_node();
                self.children[node as usize * self.context_alphabet + c] = next;
            }
            node = next;
            path.push(node);
        }
        for d in (0..=self.depth).rev() {
            let id = path[d];
            let step = self.kt_log_step(Some(id), x);
            let i = id as usize;
            self.log_pe[i] += step;
            self.counts[i * self.alphabet + x] += 1;
            self.totals[i] += 1;
            self.log_pw[i] = if d == self.depth {
                self.log_pe[i]
            } else {
                ln_half_mix(self.log_pe[i], self.children_log_pw(id))
            };
        }
        Ok(())
    }

    /// Largest deviation, in nats, between a node's stored `ln P_w` and
    /// the weighting recursion evaluated from its stored `ln P_e` and
    /// children.
    pub fn recursion_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut stack = vec![(0u32, 0usize)];
        while let Some((id, d)) = stack.pop() {
            let i = id as usize;
            let expected = if d == self.depth {
                self.log_pe[i]
            } else {
                let base = i * self.context_alphabet;
                let mut prod = 0.0;
                for &c in &self.children[base..base + self.context_alphabet] {
                    if c != NONE {
                        prod += self.log_pw[c as usize];
                        stack.push((c, d + 1));
                    }
                }
                let (a, b) = (self.log_pe[i], prod);
                let hi = a.max(b);
                hi + (0.5 * (a - hi).exp() + 0.5 * (b - hi).exp()).ln()
            };
            let err = (self.log_pw[i] - expected).abs();
            worst = worst.max(err);
        }
        worst
    }

    /// `(counts, ln P_e, ln P_w)` for every node, in creation order.
    pub fn node_stats(&self) -> impl Iterator<Item = (&[u32], f64, f64)> + '_ {
        (0..self.node_count()).map(move |i| {
            (
                &self.counts[i * self.alphabet..(i + 1) * self.alphabet],
                self.log_pe[i],
                self.log_pw[i],
            )
        })
    }

    /// Record `CTW_TREE`, payload: `K: u64 | C: u64 | depth: u64 |
    /// counts: [u32] | log_pe: [f64] | log_pw: [f64] | children: [u32]`.
    pub(crate) fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::CTW_TREE, |w| {
            w.usize(self.alphabet);
            w.usize(self.context_alphabet);
            w.usize(self.depth);
            w.u32s(&self.counts);
            w.f64s(&self.log_pe);
            w.f64s(&self.log_pw);
            w.u32s(&self.children);
        });
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let alphabet = r.usize()?;
        let context_alphabet = r.usize()?;
        let depth = r.usize()?;
        let counts = r.u32s()?;
        let log_pe = r.f64s()?;
        let log_pw = r.f64s()?;
        let children = r.u32s()?;
        let nodes = log_pe.len();
        if alphabet == 0
            || context_alphabet == 0
            || nodes == 0
            || counts.len() != nodes * alphabet
            || log_pw.len() != nodes
            || children.len() != nodes * context_alphabet
            || children.iter().any(|&c| c != NONE && c as usize >= nodes)
        {
            return Err(CodingError::InvalidParameter("inconsistent CTW tree snapshot".into()));
        }
        let totals = counts.chunks(alphabet).map(|c| c.iter().sum()).collect();
        Ok(Self {
            alphabet,
            context_alphabet,
            depth,
            counts,
            totals,
            log_pe,
            log_pw,
            children,
        })
    }
}

/// CTW over a plain symbol stream: the context is the previous `depth`
/// symbols, most recent first, padded with a boundary symbol (`K`) at the
/// start of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CtwModel {
    alphabet: Alphabet,
    tree: CtwTree,
    recent: VecDeque<Symbol>,
}

impl CtwModel {
    pub fn new(alphabet: Alphabet, depth: usize) -> Result<Self, CodingError> {
        let k = alphabet.size();
        Ok(Self {
            alphabet,
            tree: CtwTree::new(k, k + 1, depth)?,
            recent: std::iter::repeat_n(k, depth).collect(),
        })
    }

    pub fn tree(&self) -> &CtwTree {
        &self.tree
    }

    fn context(&self) -> Vec<Symbol> {
        self.recent.iter().copied().collect()
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let recent: VecDeque<_> = r.usizes()?.into();
        let tree = snapshot::read_tree(r)?;
        let k = tree.alphabet_size();
        if tree.context_alphabet_size() != k + 1 || recent.len() != tree.depth() || recent.iter().any(|&c| c > k) {
            return Err(CodingError::InvalidParameter("inconsistent CTW model snapshot".into()));
        }
        Ok(Self {
            alphabet: Alphabet::new(k)?,
            tree,
            recent,
        })
    }
}

impl SequentialModel for CtwModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn history_len(&self) -> u64 {
        self.tree.history_len()
    }

    fn prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.alphabet.check(x)?;
        self.tree.prob(&self.context(), x)
    }

    fn log2_prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.alphabet.check(x)?;
        Ok(self.tree.log_prob(&self.context(), x)? / LN_2)
    }

    fn probs(&self) -> Vec<f64> {
        self.tree.probs(&self.context()).expect("own context is valid")
    }

    fn update(&mut self, x: Symbol) -> Result<(), CodingError> {
        self.alphabet.check(x)?;
        self.tree.update(&self.context(), x)?;
        if self.tree.depth() > 0 {
            self.recent.pop_back();
            self.recent.push_front(x);
        }
        Ok(())
    }

    /// Payload: `recent: [u64]` (most recent first) `| CTW_TREE record`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::CTW, |w| {
            w.usizes(&self.recent.iter().copied().collect::<Vec<_>>());
            self.tree.write_snapshot(w);
        });
    }

    fn box_clone(&self) -> Box<dyn SequentialModel> {
        Box::new(self.clone())
    }
}

//! Factored state models over grid observations.
//!
//! An observation is a row-major vector of `width * height` cells, each a
//! symbol of a small cell alphabet `K`. Every model here scores a whole
//! observation as a product of per-factor terms,
//! `log ρ(s) = Σ_i log ρ_i(s_i | context_i)`, summed in factor order.
//!
//! The context of cell `i` is, in order: the same cell in the previously
//! observed state, then already-decoded neighbours of the current state
//! (left, up, up-left, up-right, two-left, two-up). Positions outside the
//! grid, and the previous state before the first update, read as the
//! boundary symbol `K`. A model of depth `D` keeps the first `D` entries.

use super::logistic::{Adagrad, SoftmaxRegression};
use super::sad::SadCounter;
use super::snapshot::{self, tag, SnapshotReader, SnapshotWriter};
use super::{CodingError, CtwTree, StateModel, Symbol};

const LN_2: f64 = std::f64::consts::LN_2;

const NEIGHBOURS: [(isize, isize); 6] = [(-1, 0), (0, -1), (-1, -1), (1, -1), (-2, 0), (0, -2)];

/// Longest supported context: previous value plus every neighbour.
pub const MAX_CONTEXT_DEPTH: usize = 1 + NEIGHBOURS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// Cell alphabet size `K`.
    pub alphabet: usize,
}

impl GridLayout {
    pub fn new(width: usize, height: usize, alphabet: usize) -> Result<Self, CodingError> {
        if width == 0 || height == 0 {
            return Err(CodingError::InvalidParameter("grid must have at least one cell".into()));
        }
        if alphabet == 0 {
            return Err(CodingError::EmptyAlphabet);
        }
        Ok(Self {
            width,
            height,
            alphabet,
        })
    }

    pub fn factors(&self) -> usize {
        self.width * self.height
    }

    pub fn boundary(&self) -> Symbol {
        self.alphabet
    }

    pub fn context_alphabet(&self) -> usize {
        self.alphabet + 1
    }

    pub fn check(&self, obs: &[Symbol]) -> Result<(), CodingError> {
        if obs.len() != self.factors() {
            return Err(CodingError::ShapeMismatch {
                expected: self.factors(),
                got: obs.len(),
            });
        }
        if let Some(&x) = obs.iter().find(|&&x| x >= self.alphabet) {
            return Err(CodingError::SymbolOutOfRange {
                symbol: x,
                size: self.alphabet,
            });
        }
        Ok(())
    }

    /// Fills `out` (length = depth) with the context of factor `i`.
    pub fn context(&self, prev: Option<&[Symbol]>, cur: &[Symbol], i: usize, out: &mut [Symbol]) {
        if out.is_empty() {
            return;
        }
        out[0] = prev.map_or(self.boundary(), |p| p[i]);
        let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
        for (slot, &(dx, dy)) in out[1..].iter_mut().zip(NEIGHBOURS.iter()) {
            let (nx, ny) = (x + dx, y + dy);
            *slot = if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                self.boundary()
            } else {
                cur[ny as usize * self.width + nx as usize]
            };
        }
    }

    fn check_depth(depth: usize) -> Result<(), CodingError> {
        if depth > MAX_CONTEXT_DEPTH {
            return Err(CodingError::InvalidParameter(format!(
                "context depth {depth} exceeds the maximum of {MAX_CONTEXT_DEPTH}"
            )));
        }
        Ok(())
    }

    fn write(&self, w: &mut SnapshotWriter) {
        w.usize(self.width);
        w.usize(self.height);
        w.usize(self.alphabet);
    }

    fn read(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        Self::new(r.usize()?, r.usize()?, r.usize()?)
    }
}

fn write_prev(w: &mut SnapshotWriter, prev: &Option<Vec<Symbol>>) {
    w.bool(prev.is_some());
    if let Some(p) = prev {
        w.usizes(p);
    }
}

fn read_prev(r: &mut SnapshotReader<'_>, layout: &GridLayout) -> Result<Option<Vec<Symbol>>, CodingError> {
    if r.bool()? {
        let p = r.usizes()?;
        layout.check(&p)?;
        Ok(Some(p))
    } else {
        Ok(None)
    }
}

/// One CTW tree per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredCtw {
    layout: GridLayout,
    depth: usize,
    trees: Vec<CtwTree>,
    prev: Option<Vec<Symbol>>,
    history: u64,
}

impl FactoredCtw {
    pub fn new(layout: GridLayout, depth: usize) -> Result<Self, CodingError> {
        GridLayout::check_depth(depth)?;
        let tree = CtwTree::new(layout.alphabet, layout.context_alphabet(), depth)?;
        Ok(Self {
            layout,
            depth,
            trees: vec![tree; layout.factors()],
            prev: None,
            history: 0,
        })
    }

    pub fn trees(&self) -> &[CtwTree] {
        &self.trees
    }

    /// Per-factor `log2 ρ_i(s_i | context_i)`.
    pub fn factor_log2_probs(&self, obs: &[Symbol]) -> Result<Vec<f64>, CodingError> {
        self.layout.check(obs)?;
        let mut ctx = vec![0; self.depth];
        Ok((0..obs.len())
            .map(|i| {
                self.layout.context(self.prev.as_deref(), obs, i, &mut ctx);
                self.trees[i].log_prob(&ctx, obs[i]).expect("validated") / LN_2
            })
            .collect())
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let layout = GridLayout::read(r)?;
        let depth = r.usize()?;
        GridLayout::check_depth(depth)?;
        let history = r.u64()?;
        let prev = read_prev(r, &layout)?;
        let trees = (0..layout.factors())
            .map(|_| snapshot::read_tree(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            layout,
            depth,
            trees,
            prev,
            history,
        })
    }
}

impl StateModel for FactoredCtw {
    fn history_len(&self) -> u64 {
        self.history
    }

    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError> {
        Ok(self.factor_log2_probs(obs)?.into_iter().sum())
    }

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError> {
        self.layout.check(obs)?;
        let mut ctx = vec![0; self.depth];
        for (i, &x) in obs.iter().enumerate() {
            self.layout.context(self.prev.as_deref(), obs, i, &mut ctx);
            self.trees[i].update(&ctx, x)?;
        }
        self.prev = Some(obs.to_vec());
        self.history += 1;
        Ok(())
    }

    /// Payload: `width | height | K | depth | history | prev |
    /// CTW_TREE record per cell`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::FACTORED_CTW, |w| {
            self.layout.write(w);
            w.usize(self.depth);
            w.u64(self.history);
            write_prev(w, &self.prev);
            self.trees.iter().for_each(|t| t.write_snapshot(w));
        });
    }

    fn box_clone(&self) -> Box<dyn StateModel> {
        Box::new(self.clone())
    }
}

/// The grid cut into square regions; each region's patch is one symbol
/// of a sparse adaptive Dirichlet estimator specific to that region.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredSad {
    layout: GridLayout,
    region: usize,
    regions: Vec<Vec<usize>>,
    counters: Vec<SadCounter>,
    history: u64,
}

impl FactoredSad {
    pub fn new(layout: GridLayout, region: usize) -> Result<Self, CodingError> {
        if region == 0 {
            return Err(CodingError::InvalidParameter("region size must be positive".into()));
        }
        let mut regions = Vec::new();
        for ry in (0..layout.height).step_by(region) {
            for rx in (0..layout.width).step_by(region) {
                let cells: Vec<usize> = (ry..(ry + region).min(layout.height))
                    .flat_map(|y| (rx..(rx + region).min(layout.width)).map(move |x| y * layout.width + x))
                    .collect();
                regions.push(cells);
            }
        }
        let bits_per_cell = (layout.alphabet as f64).log2();
        let mut counters = Vec::with_capacity(regions.len());
        for cells in &regions {
            if bits_per_cell * cells.len() as f64 > 64.0 {
                return Err(CodingError::InvalidParameter(format!(
                    "region of {} cells over {} symbols does not fit a 64-bit patch key",
                    cells.len(),
                    layout.alphabet
                )));
            }
            counters.push(SadCounter::new((layout.alphabet as f64).powi(cells.len() as i32))?);
        }
        Ok(Self {
            layout,
            region,
            regions,
            counters,
            history: 0,
        })
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    fn patch_key(&self, obs: &[Symbol], cells: &[usize]) -> u64 {
        let k = self.layout.alphabet as u64;
        cells.iter().rev().fold(0u64, |acc, &c| acc.wrapping_mul(k).wrapping_add(obs[c] as u64))
    }

    /// Per-region `log2 ρ_r(patch_r)`.
    pub fn factor_log2_probs(&self, obs: &[Symbol]) -> Result<Vec<f64>, CodingError> {
        self.layout.check(obs)?;
        Ok(self
            .regions
            .iter()
            .zip(&self.counters)
            .map(|(cells, c)| c.log2_prob(self.patch_key(obs, cells)))
            .collect())
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let layout = GridLayout::read(r)?;
        let mut m = Self::new(layout, r.usize()?)?;
        m.history = r.u64()?;
        for c in m.counters.iter_mut() {
            let mut payload = r.record(tag::SAD_COUNTER)?;
            *c = SadCounter::read_payload(&mut payload)?;
            payload.finish()?;
        }
        Ok(m)
    }
}

impl StateModel for FactoredSad {
    fn history_len(&self) -> u64 {
        self.history
    }

    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError> {
        Ok(self.factor_log2_probs(obs)?.into_iter().sum())
    }

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError> {
        self.layout.check(obs)?;
        for r in 0..self.regions.len() {
            let key = self.patch_key(obs, &self.regions[r]);
            self.counters[r].update(key);
        }
        self.history += 1;
        Ok(())
    }

    /// Payload: `width | height | K | region | history |
    /// SAD_COUNTER record per region` (regions in row-major order).
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::FACTORED_SAD, |w| {
            self.layout.write(w);
            w.usize(self.region);
            w.u64(self.history);
            for c in &self.counters {
                w.record(tag::SAD_COUNTER, |w| c.write_payload(w));
            }
        });
    }

    fn box_clone(&self) -> Box<dyn StateModel> {
        Box::new(self.clone())
    }
}

/// Autoregressive per-cell softmax regression with weights shared across
/// cells. Features are the one-hot encoded local context plus a bias;
/// weights are trained online with Adagrad, one cell at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredLogistic {
    layout: GridLayout,
    depth: usize,
    model: SoftmaxRegression,
    optimizer: Adagrad,
    prev: Option<Vec<Symbol>>,
    history: u64,
}

impl FactoredLogistic {
    pub fn new(layout: GridLayout, depth: usize, learning_rate: f64, epsilon: f64) -> Result<Self, CodingError> {
        GridLayout::check_depth(depth)?;
        let dim = depth * layout.context_alphabet() + 1;
        let model = SoftmaxRegression::new(layout.alphabet, dim)?;
        let optimizer = Adagrad::new(model.weights().len(), learning_rate, epsilon)?;
        Ok(Self {
            layout,
            depth,
            model,
            optimizer,
            prev: None,
            history: 0,
        })
    }

    pub fn regression(&self) -> &SoftmaxRegression {
        &self.model
    }

    pub fn optimizer(&self) -> &Adagrad {
        &self.optimizer
    }

    fn active_features(&self, prev: Option<&[Symbol]>, obs: &[Symbol], i: usize, ctx: &mut [Symbol], out: &mut Vec<usize>) {
        self.layout.context(prev, obs, i, ctx);
        let c = self.layout.context_alphabet();
        out.clear();
        out.extend(ctx.iter().enumerate().map(|(d, &s)| d * c + s));
        out.push(self.depth * c);
    }

    /// Predictive distribution of cell `i` given the rest of `obs` as
    /// context.
    pub fn factor_probs(&self, obs: &[Symbol], i: usize) -> Result<Vec<f64>, CodingError> {
        self.layout.check(obs)?;
        let mut ctx = vec![0; self.depth];
        let mut active = Vec::new();
        self.active_features(self.prev.as_deref(), obs, i, &mut ctx, &mut active);
        Ok(self.model.probs_sparse(&active))
    }

    pub fn factor_log2_probs(&self, obs: &[Symbol]) -> Result<Vec<f64>, CodingError> {
        self.layout.check(obs)?;
        let mut ctx = vec![0; self.depth];
        let mut active = Vec::new();
        Ok((0..obs.len())
            .map(|i| {
                self.active_features(self.prev.as_deref(), obs, i, &mut ctx, &mut active);
                self.model.probs_sparse(&active)[obs[i]].log2()
            })
            .collect())
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let layout = GridLayout::read(r)?;
        let depth = r.usize()?;
        GridLayout::check_depth(depth)?;
        let history = r.u64()?;
        let prev = read_prev(r, &layout)?;
        let mut payload = r.record(tag::SOFTMAX)?;
        let model = SoftmaxRegression::read_payload(&mut payload)?;
        let optimizer = Adagrad::read_payload(&mut payload)?;
        payload.finish()?;
        if model.classes() != layout.alphabet
            || model.dim() != depth * layout.context_alphabet() + 1
            || optimizer.accumulator().len() != model.weights().len()
        {
            return Err(CodingError::InvalidParameter("inconsistent logistic snapshot".into()));
        }
        Ok(Self {
            layout,
            depth,
            model,
            optimizer,
            prev,
            history,
        })
    }
}

impl StateModel for FactoredLogistic {
    fn history_len(&self) -> u64 {
        self.history
    }

    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError> {
        Ok(self.factor_log2_probs(obs)?.into_iter().sum())
    }

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError> {
        self.layout.check(obs)?;
        let prev = self.prev.take();
        let mut ctx = vec![0; self.depth];
        let mut active = Vec::new();
        let dim = self.model.dim();
        for (i, &y) in obs.iter().enumerate() {
            self.active_features(prev.as_deref(), obs, i, &mut ctx, &mut active);
            let p = self.model.probs_sparse(&active);
            let grad = p.iter().enumerate().flat_map(|(k, &pk)| {
                let coef = pk - if k == y { 1.0 } else { 0.0 };
                active.iter().map(move |&j| (k * dim + j, coef))
            });
            self.optimizer.step_sparse(self.model.weights_mut(), grad);
        }
        self.prev = Some(obs.to_vec());
        self.history += 1;
        Ok(())
    }

    /// Payload: `width | height | K | depth | history | prev | SOFTMAX
    /// record (classes | dim | weights | learning_rate | epsilon | accum)`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::FACTORED_LOGISTIC, |w| {
            self.layout.write(w);
            w.usize(self.depth);
            w.u64(self.history);
            write_prev(w, &self.prev);
            w.record(tag::SOFTMAX, |w| {
                self.model.write_payload(w);
                self.optimizer.write_payload(w);
            });
        });
    }

    fn box_clone(&self) -> Box<dyn StateModel> {
        Box::new(self.clone())
    }
}

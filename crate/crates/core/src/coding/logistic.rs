use super::snapshot::{SnapshotReader, SnapshotWriter};
use super::CodingError;

/// Multinomial logistic regression: `p(k | x) = softmax(W x)_k`.
///
/// Weights are stored row-major, one row of `dim` entries per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

impl SoftmaxRegression {
    pub fn new(classes: usize, dim: usize) -> Result<Self, CodingError> {
        if classes == 0 || dim == 0 {
            return Err(CodingError::InvalidParameter(
                "softmax regression needs at least one class and one feature".into(),
            ));
        }
        Ok(Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "feature vector length");
        let mut logits: Vec<f64> = self
            .weights
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect();
        softmax_in_place(&mut logits);
        logits
    }

    /// Probabilities for a binary feature vector given by its active
    /// indices.
    pub fn probs_sparse(&self, active: &[usize]) -> Vec<f64> {
        let mut logits: Vec<f64> = self
            .weights
            .chunks_exact(self.dim)
            .map(|row| active.iter().map(|&j| row[j]).sum())
            .collect();
        softmax_in_place(&mut logits);
        logits
    }

    /// Natural-log loss `-ln p(y | x)` and its gradient with respect to
    /// the weights (same layout as [`weights`](Self::weights)).
    pub fn loss_and_grad(&self, x: &[f64], y: usize) -> (f64, Vec<f64>) {
        let p = self.probs(x);
        let loss = -p[y].ln();
        let mut grad = vec![0.0; self.weights.len()];
        for (k, row) in grad.chunks_exact_mut(self.dim).enumerate() {
            let coef = p[k] - if k == y { 1.0 } else { 0.0 };
            for (g, v) in row.iter_mut().zip(x) {
                *g = coef * v;
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        -self.probs(x)[y].ln()
    }

    pub(crate) fn write_payload(&self, w: &mut SnapshotWriter) {
        w.usize(self.classes);
        w.usize(self.dim);
        w.f64s(&self.weights);
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let mut m = Self::new(r.usize()?, r.usize()?)?;
        let weights = r.f64s()?;
        if weights.len() != m.weights.len() {
            return Err(CodingError::InvalidParameter("softmax weights length".into()));
        }
        m.weights = weights;
        Ok(m)
    }
}

/// Per-coordinate adaptive gradient steps:
/// `G += g²`, `w -= η·g / (√G + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    learning_rate: f64,
    epsilon: f64,
    accum: Vec<f64>,
}

impl Adagrad {
    pub fn new(params: usize, learning_rate: f64, epsilon: f64) -> Result<Self, CodingError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) || !(epsilon >= 0.0) {
            return Err(CodingError::InvalidParameter(format!(
                "adagrad needs a positive learning rate and non-negative epsilon, got {learning_rate}, {epsilon}"
            )));
        }
        Ok(Self {
            learning_rate,
            epsilon,
            accum: vec![0.0; params],
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Accumulated squared gradients.
    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.accum.len());
        assert_eq!(grad.len(), self.accum.len());
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for ((w, g), acc) in params.iter_mut().zip(grad).zip(self.accum.iter_mut()) {
            adagrad_update(lr, eps, w, *g, acc);
        }
    }

    /// Step on a sparse gradient given as `(index, value)` pairs.
    pub fn step_sparse(&mut self, params: &mut [f64], grad: impl IntoIterator<Item = (usize, f64)>) {
        for (i, g) in grad {
            adagrad_update(self.learning_rate, self.epsilon, &mut params[i], g, &mut self.accum[i]);
        }
    }

    pub(crate) fn write_payload(&self, w: &mut SnapshotWriter) {
        w.f64(self.learning_rate);
        w.f64(self.epsilon);
        w.f64s(&self.accum);
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let lr = r.f64()?;
        let eps = r.f64()?;
        let accum = r.f64s()?;
        let mut a = Self::new(accum.len(), lr, eps)?;
        a.accum = accum;
        Ok(a)
    }
}

#[inline]
fn adagrad_update(lr: f64, eps: f64, w: &mut f64, g: f64, acc: &mut f64) {
    if g == 0.0 {
        return;
    }
    *acc += g * g;
    *w -= lr * g / (acc.sqrt() + eps);
}

//! Differentiable objectives behind one interface.
//!
//! Dataset-backed objectives wrap a [`Model`] (logistic regression, the
//! two-layer MLP, or its LoRA reparameterization) together with the
//! indices of the samples a client owns. Synthetic quadratics are
//! analytic and draw additive Gaussian noise for their stochastic
//! gradients.

mod dataset;
mod logistic;
mod lora;
mod mlp;
mod quadratic;

pub use dataset::{accuracy, DatasetObjective, MiniBatch};
pub use logistic::Logistic;
pub use lora::{lora_base, LoraMlp};
pub use mlp::Mlp;
pub use quadratic::{make_synthetic_federation, QuadraticObjective, SyntheticFederation, SyntheticSpec};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::Result;
use crate::params::Layout;
use crate::rng::StreamRng;

/// A per-sample classification model with hand-derived gradients.
pub trait Model: Send + Sync {
    fn layout(&self) -> &Layout;

    fn classes(&self) -> usize;

    fn input_width(&self) -> usize;

    /// Mean cross-entropy over the rows of `x`. When `grad` is given it is
    /// overwritten with the gradient of that mean.
    fn loss_grad(&self, theta: &[f64], x: ArrayView2<'_, f64>, y: &[u8], grad: Option<&mut [f64]>)
        -> f64;

    /// `batch × classes` logits.
    fn logits(&self, theta: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64>;

    /// Fresh parameters drawn from `rng`.
    fn init(&self, rng: &mut StreamRng) -> Vec<f64>;
}

/// A local objective `F_i` as seen by one client.
pub trait Objective: Send + Sync {
    fn layout(&self) -> &Layout;

    fn dim(&self) -> usize {
        self.layout().dim()
    }

    /// Number of local samples, or `None` for analytic objectives.
    fn samples(&self) -> Option<usize>;

    fn loss(&self, theta: &[f64]) -> Result<f64>;

    /// Writes `∇F(θ)` into `grad` and returns `F(θ)`.
    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// One stochastic gradient `g(θ; ξ)`. Dataset objectives take the next
    /// minibatch from `sampler`; analytic ones add noise from `rng`.
    fn stochastic_grad(
        &self,
        theta: &[f64],
        sampler: &mut BatchSampler,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64>;

    /// Known gradient-Lipschitz constant.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

/// Walks a client's samples in shuffled minibatches, reshuffling after
/// each pass. The last batch of a pass may be short.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, rng: &mut StreamRng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self {
            order,
            cursor: 0,
            batch: batch.max(1),
        }
    }

    /// Sampler for analytic objectives.
    pub fn none() -> Self {
        Self {
            order: Vec::new(),
            cursor: 0,
            batch: 1,
        }
    }

    /// Number of batches in one pass.
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }

    /// Positions (into the client's local sample list) of the next batch.
    pub fn next_batch(&mut self, rng: &mut StreamRng) -> &[usize] {
        if self.order.is_empty() {
            return &[];
        }
        if self.cursor >= self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        let end = (start + self.batch).min(self.order.len());
        self.cursor = end;
        &self.order[start..end]
    }
}

/// Numerically stable `log Σ exp`.
pub(crate) fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = row.clone().fold(f64::NEG_INFINITY, f64::max);
    m + row.map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Turns logits into `(mean cross-entropy, (softmax − onehot)/b)`.
pub(crate) fn softmax_xent(logits: &mut Array2<f64>, y: &[u8]) -> f64 {
    let b = logits.nrows() as f64;
    let mut loss = 0.0;
    for (mut row, &label) in logits.rows_mut().into_iter().zip(y) {
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[label as usize];
        row.mapv_inplace(|z| (z - lse).exp() / b);
        row[label as usize] -= 1.0 / b;
    }
    loss / b
}

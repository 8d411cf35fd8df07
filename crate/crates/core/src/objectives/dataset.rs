use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::{BatchSampler, Model, Objective};
use crate::data::LabeledDataset;
use crate::error::{check_len, Error, Result};
use crate::params::Layout;
use crate::rng::StreamRng;

/// Rows evaluated at once for full-data passes.
const CHUNK: usize = 1024;

/// A gathered minibatch `ξ`.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

impl MiniBatch {
    pub fn gather(data: &LabeledDataset, rows: &[usize]) -> Self {
        Self {
            features: data.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| data.labels[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean loss of `model` over the samples a client owns.
#[derive(Clone)]
pub struct DatasetObjective {
    model: Arc<dyn Model>,
    data: Arc<LabeledDataset>,
    rows: Arc<[usize]>,
}

impl DatasetObjective {
    pub fn new(model: Arc<dyn Model>, data: Arc<LabeledDataset>, rows: Vec<usize>) -> Result<Self> {
        check_len(model.input_width(), data.width())?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= data.len()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range")));
        }
        Ok(Self {
            model,
            data,
            rows: rows.into(),
        })
    }

    /// Objective over every sample of `data`.
    pub fn full(model: Arc<dyn Model>, data: Arc<LabeledDataset>) -> Result<Self> {
        let n = data.len();
        Self::new(model, data, (0..n).collect())
    }

    pub fn model(&self) -> &Arc<dyn Model> {
        &self.model
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn dataset(&self) -> &Arc<LabeledDataset> {
        &self.data
    }

    /// Gradient on an explicit minibatch.
    pub fn batch_loss_grad(&self, theta: &[f64], batch: &MiniBatch, grad: &mut [f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        check_len(self.dim(), grad.len())?;
        if batch.is_empty() {
            return Err(Error::InvalidBatch("empty minibatch".into()));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&l| l as usize >= self.model.classes()) {
            return Err(Error::InvalidBatch(format!("label {bad} out of range")));
        }
        check_finite(theta)?;
        Ok(self
            .model
            .loss_grad(theta, batch.features.view(), &batch.labels, Some(grad)))
    }

    /// Gradient on the local samples at `positions` (indices into [`rows`](Self::rows)).
    pub fn positions_loss_grad(&self, theta: &[f64], positions: &[usize], grad: &mut [f64]) -> Result<f64> {
        let rows: Vec<usize> = positions.iter().map(|&p| self.rows[p]).collect();
        let batch = MiniBatch::gather(&self.data, &rows);
        self.batch_loss_grad(theta, &batch, grad)
    }

    fn full_pass(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        check_finite(theta)?;
        let n = self.rows.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(g) = grad.as_deref_mut() {
            check_len(self.dim(), g.len())?;
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut scratch = vec![0.0; if grad.is_some() { self.dim() } else { 0 }];
        let mut loss = 0.0;
        for chunk in self.rows.chunks(CHUNK) {
            let batch = MiniBatch::gather(&self.data, chunk);
            let w = chunk.len() as f64 / n as f64;
            match grad.as_deref_mut() {
                Some(g) => {
                    loss += w * self.model.loss_grad(
                        theta,
                        batch.features.view(),
                        &batch.labels,
                        Some(&mut scratch),
                    );
                    g.iter_mut().zip(&scratch).for_each(|(a, b)| *a += w * b);
                }
                None => {
                    loss += w * self
                        .model
                        .loss_grad(theta, batch.features.view(), &batch.labels, None);
                }
            }
        }
        Ok(loss)
    }
}

fn check_finite(theta: &[f64]) -> Result<()> {
    if theta.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("parameters"))
    }
}

impl Objective for DatasetObjective {
    fn layout(&self) -> &Layout {
        self.model.layout()
    }

    fn samples(&self) -> Option<usize> {
        Some(self.rows.len())
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.full_pass(theta, None)
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.full_pass(theta, Some(grad))
    }

    fn stochastic_grad(
        &self,
        theta: &[f64],
        sampler: &mut BatchSampler,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64> {
        let positions = sampler.next_batch(rng).to_vec();
        self.positions_loss_grad(theta, &positions, grad)
    }
}

/// Fraction of `data` classified correctly.
pub fn accuracy(model: &dyn Model, theta: &[f64], data: &LabeledDataset) -> f64 {
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let logits = model.logits(theta, data.features.slice(s![start..end, ..]));
        for (row, &label) in logits.rows().into_iter().zip(&data.labels[start..end]) {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            correct += usize::from(best == label as usize);
        }
    }
    correct as f64 / data.len() as f64
}

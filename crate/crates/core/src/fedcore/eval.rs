use std::sync::Arc;

use super::round::{Evaluator, Score};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::objectives::{accuracy, DatasetObjective, Objective, SyntheticFederation};
use crate::subspace::norm_sq;

/// Exact global loss and gradient of a quadratic federation.
impl Evaluator for SyntheticFederation {
    fn grad_norm_sq(&self, theta: &[f64]) -> Result<f64> {
        Ok(norm_sq(&self.global_grad(theta)))
    }

    fn score(&self, theta: &[f64]) -> Result<Score> {
        Ok(Score {
            loss: self.global_loss(theta)?,
            accuracy: None,
        })
    }
}

/// Loss and gradient norm on a fixed training subset, accuracy on a test set.
pub struct DatasetEvaluator {
    pub train: DatasetObjective,
    pub test: Option<Arc<LabeledDataset>>,
}

impl Evaluator for DatasetEvaluator {
    fn grad_norm_sq(&self, theta: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; theta.len()];
        self.train.loss_grad(theta, &mut g)?;
        Ok(norm_sq(&g))
    }

    fn score(&self, theta: &[f64]) -> Result<Score> {
        let loss = self.train.loss(theta)?;
        let accuracy = self
            .test
            .as_ref()
            .map(|test| accuracy(self.train.model().as_ref(), theta, test));
        Ok(Score { loss, accuracy })
    }
}

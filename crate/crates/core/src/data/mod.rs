//! Datasets: IDX ingestion, label-skewed Dirichlet partitioning, and
//! small synthetic classification sets.

mod idx;
mod partition;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
pub use partition::{dirichlet_partition, partition_stats, Partition, PartitionSpec, PartitionStats};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    MnistTrain,
    MnistTest,
    Synthetic,
}

/// Features in `[0, 1]` (one row per sample) with integer labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub classes: usize,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Consistency(format!("label {bad} outside [0, {classes})")));
        }
        if features.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Consistency("feature outside [0, 1]".into()));
        }
        Ok(Self {
            features,
            labels,
            classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Copy of the rows in `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(ndarray::Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.classes, self.provenance)
    }
}

/// Gaussian class clusters squashed into `[0, 1]` by a logistic map.
///
/// Each class has a random mean direction; `spread` scales the
/// within-class noise.
pub fn synthetic_classification<R: Rng + ?Sized>(
    n: usize,
    width: usize,
    classes: usize,
    spread: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if n == 0 || width == 0 || classes == 0 || classes > 256 {
        return Err(Error::InvalidArgument("synthetic dataset sizes".into()));
    }
    let means = Array2::from_shape_simple_fn((classes, width), || {
        2.0 * rng.sample::<f64, _>(StandardNormal)
    });
    let mut labels = Vec::with_capacity(n);
    let mut features = Array2::zeros((n, width));
    for i in 0..n {
        let c = rng.random_range(0..classes);
        labels.push(c as u8);
        for j in 0..width {
            let z: f64 = means[[c, j]] + spread * rng.sample::<f64, _>(StandardNormal);
            features[[i, j]] = 1.0 / (1.0 + (-z).exp());
        }
    }
    LabeledDataset::new(features, labels, classes, Provenance::Synthetic)
}

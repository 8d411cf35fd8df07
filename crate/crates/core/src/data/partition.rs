//! Label-skewed Dirichlet partitioning.
//!
//! For every class independently, a client-mixture `q ~ Dir(α·1_p)` is
//! drawn from normalized `Gamma(α, 1)` variates. The class's samples are
//! shuffled and handed out in contiguous blocks whose sizes are
//! `n_c·q` rounded by largest remainder, so block sizes sum to `n_c`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{Purpose, SeedTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub clients: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::InvalidArgument("partition needs at least one client".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet concentration must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-client sample indices. Lists are disjoint and cover every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<Vec<usize>>,
}

impl Partition {
    pub fn clients(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignment.iter().map(Vec::len).collect()
    }

    pub fn empty_clients(&self) -> Vec<usize> {
        (0..self.clients())
            .filter(|&i| self.assignment[i].is_empty())
            .collect()
    }
}

/// Splits `total` into integer parts proportional to `weights`.
pub(crate) fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps the lowest index first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

fn dirichlet<R: Rng + ?Sized>(alpha: f64, p: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let mut q: Vec<f64> = (0..p).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = q.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        q.iter_mut().for_each(|x| *x /= sum);
    } else {
        // Every draw underflowed: put the mass on one client at random.
        q.iter_mut().for_each(|x| *x = 0.0);
        q[rng.random_range(0..p)] = 1.0;
    }
    q
}

pub fn dirichlet_partition(labels: &[u8], spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = spec.clients;
    let classes = labels.iter().copied().max().unwrap() as usize + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }

    let mut rng = SeedTree::new(spec.seed).stream(Purpose::Partition, 0, 0);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); p];
    for mut members in by_class {
        // Draw for every class, even empty ones, so the stream layout does
        // not depend on which classes are present.
        members.shuffle(&mut rng);
        let q = dirichlet(spec.alpha, p, &mut rng);
        let counts = largest_remainder(members.len(), &q);
        let mut start = 0;
        for (client, &count) in counts.iter().enumerate() {
            assignment[client].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for list in &mut assignment {
        list.sort_unstable();
    }
    Ok(Partition { assignment })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub sizes: Vec<usize>,
    /// `histograms[client][class]`.
    pub histograms: Vec<Vec<usize>>,
    /// Total-variation distance of each non-empty client's label
    /// distribution from the global one; `None` for empty clients.
    pub tv_distance: Vec<Option<f64>>,
    /// Mean over non-empty clients.
    pub mean_tv: f64,
    pub empty_clients: Vec<usize>,
}

pub fn partition_stats(partition: &Partition, labels: &[u8]) -> PartitionStats {
    let classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    let mut global = vec![0usize; classes];
    for &l in labels {
        global[l as usize] += 1;
    }
    let n = labels.len().max(1) as f64;
    let marginal: Vec<f64> = global.iter().map(|&c| c as f64 / n).collect();

    let mut histograms = Vec::with_capacity(partition.clients());
    let mut tv_distance = Vec::with_capacity(partition.clients());
    for list in &partition.assignment {
        let mut h = vec![0usize; classes];
        for &i in list {
            h[labels[i] as usize] += 1;
        }
        let tv = if list.is_empty() {
            None
        } else {
            let m = list.len() as f64;
            Some(
                0.5 * h
                    .iter()
                    .zip(&marginal)
                    .map(|(&c, &g)| (c as f64 / m - g).abs())
                    .sum::<f64>(),
            )
        };
        histograms.push(h);
        tv_distance.push(tv);
    }
    let present: Vec<f64> = tv_distance.iter().flatten().copied().collect();
    let mean_tv = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    PartitionStats {
        sizes: partition.sizes(),
        histograms,
        tv_distance,
        mean_tv,
        empty_clients: partition.empty_clients(),
    }
}

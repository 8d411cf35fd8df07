use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayViewMut1};

use super::config::{FedConfig, LocalSteps, MomentumStorage};
use crate::error::{check_len, Error, Result};
use crate::objectives::{BatchSampler, Objective};
use crate::params::{dist_sq, weight_view, weight_view_mut, Layout, SegmentKind};
use crate::rng::StreamRng;
use crate::subspace::StiefelBasis;

/// The projection applied to client gradients in one round.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundBases {
    /// No projection.
    Identity,
    /// `Π = P Pᵀ` on the whole vector.
    Flat(StiefelBasis),
    /// One entry per layout segment; `None` leaves the segment dense.
    PerLayer(Vec<Option<StiefelBasis>>),
}

impl RoundBases {
    /// Applies `Π` to `g` in place.
    pub fn project(&self, layout: &Layout, g: &mut [f64]) -> Result<()> {
        match self {
            RoundBases::Identity => Ok(()),
            RoundBases::Flat(p) => {
                let w = p.project_coords(g)?;
                let lifted = p.lift(&w)?;
                g.copy_from_slice(&lifted);
                Ok(())
            }
            RoundBases::PerLayer(bases) => {
                check_len(layout.segments().len(), bases.len())?;
                for (seg, basis) in layout.segments().iter().zip(bases) {
                    if let Some(p) = basis {
                        let c = p.coords_matrix(weight_view(g, seg))?;
                        let mut view = weight_view_mut(g, seg);
                        general_mat_mul(1.0, &p.matrix(), &c, 0.0, &mut view);
                    }
                }
                Ok(())
            }
        }
    }
}

/// Coordinates a client may change this round.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordMask {
    keep: Vec<bool>,
    kept: usize,
}

impl CoordMask {
    pub fn from_indices(dim: usize, indices: &[usize]) -> Self {
        let mut keep = vec![false; dim];
        for &j in indices {
            keep[j] = true;
        }
        let kept = keep.iter().filter(|&&k| k).count();
        Self { keep, kept }
    }

    pub fn from_range(dim: usize, range: std::ops::Range<usize>) -> Self {
        let mut keep = vec![false; dim];
        keep[range.clone()].iter_mut().for_each(|k| *k = true);
        Self {
            keep,
            kept: range.len(),
        }
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn contains(&self, j: usize) -> bool {
        self.keep[j]
    }

    fn apply(&self, g: &mut [f64]) {
        for (x, &k) in g.iter_mut().zip(&self.keep) {
            if !k {
                *x = 0.0;
            }
        }
    }
}

/// What one client's local run sees: everything else comes from `cfg`.
#[derive(Debug, Clone, Copy)]
pub struct LocalRule<'a> {
    pub bases: &'a RoundBases,
    pub mask: Option<&'a CoordMask>,
    /// Heavy-ball coefficient for the local iterates.
    pub momentum: f64,
    pub storage: MomentumStorage,
    pub record_drift: bool,
    pub record_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientOutcome {
    /// `θ_{i,τ} − θ^t`.
    pub delta: Vec<f64>,
    pub steps: usize,
    /// `Σ_{s<τ} ‖θ_{i,s} − θ^t‖²`.
    pub drift: Option<f64>,
    /// `θ_{i,0}, …, θ_{i,τ−1}`.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

enum Momentum {
    Dense(Vec<f64>),
    /// Coordinates per projected block; `dense` covers unprojected segments.
    Factored {
        flat: Option<Vec<f64>>,
        blocks: Vec<Option<Array2<f64>>>,
        dense: Vec<f64>,
    },
}

fn local_steps(obj: &dyn Objective, cfg: &FedConfig) -> Result<usize> {
    match cfg.local_steps {
        LocalSteps::Fixed(tau) => Ok(tau),
        LocalSteps::Epoch => match obj.samples() {
            Some(n) => Ok(n.div_ceil(cfg.batch)),
            None => Err(Error::Config(
                "epoch-based local steps need a dataset-backed objective".into(),
            )),
        },
    }
}

/// Runs `τ` local steps from `theta_t` and returns the client's delta.
///
/// Each step draws `g`, masks it, projects it with `rule.bases`, then sets
/// `v ← μ v + Π g` and `θ ← θ − η v` with `v` zero at the start of the round.
pub fn client_update(
    obj: &dyn Objective,
    theta_t: &[f64],
    rule: LocalRule<'_>,
    cfg: &FedConfig,
    rng: &mut StreamRng,
) -> Result<ClientOutcome> {
    let layout = obj.layout();
    check_len(layout.dim(), theta_t.len())?;
    let tau = local_steps(obj, cfg)?;
    let mut sampler = match obj.samples() {
        Some(n) => BatchSampler::new(n, cfg.batch, rng),
        None => BatchSampler::none(),
    };
    if obj.samples() == Some(0) {
        return Ok(ClientOutcome {
            delta: vec![0.0; theta_t.len()],
            steps: 0,
            drift: rule.record_drift.then_some(0.0),
            trajectory: rule.record_trajectory.then(Vec::new),
        });
    }

    let d = theta_t.len();
    let eta = cfg.stepsize;
    let mu = rule.momentum;
    let factored = rule.storage == MomentumStorage::Factored && !matches!(rule.bases, RoundBases::Identity);
    let mut momentum = if factored {
        match rule.bases {
            RoundBases::Flat(p) => Momentum::Factored {
                flat: Some(vec![0.0; p.rank()]),
                blocks: Vec::new(),
                dense: Vec::new(),
            },
            RoundBases::PerLayer(bases) => Momentum::Factored {
                flat: None,
                blocks: layout
                    .segments()
                    .iter()
                    .zip(bases)
                    .map(|(seg, b)| match (b, seg.kind) {
                        (Some(p), SegmentKind::Weight { inp, .. }) => Some(Array2::zeros((p.rank(), inp))),
                        _ => None,
                    })
                    .collect(),
                dense: vec![0.0; d],
            },
            RoundBases::Identity => unreachable!(),
        }
    } else {
        Momentum::Dense(vec![0.0; d])
    };

    let mut theta = theta_t.to_vec();
    let mut grad = vec![0.0; d];
    let mut drift = 0.0;
    let mut trajectory = rule.record_trajectory.then(|| Vec::with_capacity(tau));
    for _ in 0..tau {
        if rule.record_drift {
            drift += dist_sq(&theta, theta_t);
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.push(theta.clone());
        }
        obj.stochastic_grad(&theta, &mut sampler, rng, &mut grad)?;
        if let Some(mask) = rule.mask {
            mask.apply(&mut grad);
        }
        match &mut momentum {
            Momentum::Dense(v) => {
                rule.bases.project(layout, &mut grad)?;
                for ((t, v), g) in theta.iter_mut().zip(v.iter_mut()).zip(&grad) {
                    *v = mu * *v + g;
                    *t -= eta * *v;
                }
            }
            Momentum::Factored { flat, blocks, dense } => match rule.bases {
                RoundBases::Flat(p) => {
                    let w = flat.as_mut().expect("flat coordinates");
                    let c = p.project_coords(&grad)?;
                    w.iter_mut().zip(&c).for_each(|(w, c)| *w = mu * *w + c);
                    let mut th = ArrayViewMut1::from(&mut theta[..]);
                    ndarray::linalg::general_mat_vec_mul(-eta, &p.matrix(), &ArrayView1::from(&w[..]), 1.0, &mut th);
                }
                RoundBases::PerLayer(bases) => {
                    for ((seg, basis), block) in layout.segments().iter().zip(bases).zip(blocks.iter_mut()) {
                        match (basis, block) {
                            (Some(p), Some(w)) => {
                                let c = p.coords_matrix(weight_view(&grad, seg))?;
                                w.zip_mut_with(&c, |w, c| *w = mu * *w + c);
                                let mut th = weight_view_mut(&mut theta, seg);
                                general_mat_mul(-eta, &p.matrix(), &*w, 1.0, &mut th);
                            }
                            _ => {
                                let r = seg.range();
                                for ((t, v), g) in theta[r.clone()].iter_mut().zip(&mut dense[r.clone()]).zip(&grad[r]) {
                                    *v = mu * *v + g;
                                    *t -= eta * *v;
                                }
                            }
                        }
                    }
                }
                RoundBases::Identity => unreachable!(),
            },
        }
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("local iterate"));
    }
    let delta = theta.iter().zip(theta_t).map(|(a, b)| a - b).collect();
    Ok(ClientOutcome {
        delta,
        steps: tau,
        drift: rule.record_drift.then_some(drift),
        trajectory,
    })
}

/// Projected-momentum update with this round's bases.
pub fn client_update_fedslop(
    obj: &dyn Objective,
    theta_t: &[f64],
    bases: &RoundBases,
    cfg: &FedConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let rule = LocalRule {
        bases,
        mask: None,
        momentum: cfg.momentum,
        storage: cfg.storage,
        record_drift: false,
        record_trajectory: false,
    };
    Ok(client_update(obj, theta_t, rule, cfg, rng)?.delta)
}

/// Dense client momentum, the unprojected reference.
pub fn client_update_fedavg_client_momentum(
    obj: &dyn Objective,
    theta_t: &[f64],
    cfg: &FedConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    client_update_fedslop(obj, theta_t, &RoundBases::Identity, cfg, rng)
}

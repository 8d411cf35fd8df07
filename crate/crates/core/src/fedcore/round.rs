use rand::seq::index::sample as sample_indices;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::client::{client_update, ClientOutcome, CoordMask, LocalRule, RoundBases};
use super::config::{FedConfig, Method, ProjectionMode, SPARSE_DENOMINATOR};
use super::uplink_count;
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::params::{Layout, SegmentKind};
use crate::rng::{Purpose, SeedTree, StreamRng};
use crate::subspace::sample_stiefel;

/// Global quantities measured around each round.
pub trait Evaluator: Sync {
    /// `‖∇f(θ)‖²`, taken at the round-start model.
    fn grad_norm_sq(&self, theta: &[f64]) -> Result<f64>;

    /// Training loss and, if available, test accuracy at the new model.
    fn score(&self, theta: &[f64]) -> Result<Score>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// Zero-based round index `t`.
    pub round: usize,
    /// Loss at `θ^{t+1}`.
    pub train_loss: f64,
    /// Test accuracy at `θ^{t+1}`.
    pub test_accuracy: Option<f64>,
    /// `‖∇f(θ^t)‖²`.
    pub grad_norm_sq: f64,
    pub drift: Option<f64>,
    pub uplink_per_client: usize,
    pub uplink_total: usize,
}

/// Server-side state carried between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub theta: Vec<f64>,
    /// Server momentum buffer, for methods that use one.
    pub velocity: Option<Vec<f64>>,
}

impl ServerState {
    pub fn new(theta: Vec<f64>, method: Method) -> Self {
        let velocity = method.server_momentum().then(|| vec![0.0; theta.len()]);
        Self { theta, velocity }
    }
}

/// How client updates are scheduled inside a round. The reduction is over
/// client ids either way, so the result does not depend on this.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Schedule {
    #[default]
    /// On the rayon pool; in id order without the `parallel` feature.
    Parallel,
    /// Sequential, visiting clients in the given order.
    Sequential(Vec<usize>),
}

/// Samples this round's projection for `cfg.method`.
pub fn sample_bases(cfg: &FedConfig, layout: &Layout, rng: &mut StreamRng) -> Result<RoundBases> {
    if cfg.method != Method::FedSlop {
        return Ok(RoundBases::Identity);
    }
    match cfg.projection {
        ProjectionMode::Flat => Ok(RoundBases::Flat(sample_stiefel(layout.dim(), cfg.rank, rng)?)),
        ProjectionMode::PerLayer => {
            let mut bases = Vec::with_capacity(layout.segments().len());
            for seg in layout.segments() {
                bases.push(match seg.kind {
                    SegmentKind::Weight { out, .. } if cfg.rank < out => Some(sample_stiefel(out, cfg.rank, rng)?),
                    _ => None,
                });
            }
            Ok(RoundBases::PerLayer(bases))
        }
    }
}

/// Block `b` of the `SPARSE_DENOMINATOR` near-equal contiguous blocks of `0..d`.
pub fn block_range(d: usize, round: usize) -> std::ops::Range<usize> {
    let b = round % SPARSE_DENOMINATOR;
    (b * d / SPARSE_DENOMINATOR)..((b + 1) * d / SPARSE_DENOMINATOR)
}

/// Coordinates kept by the magnitude and random-subset baselines.
pub fn sparse_kept(d: usize) -> usize {
    d.div_ceil(SPARSE_DENOMINATOR)
}

/// Indices of the `k` largest `|θ_j|`, ties going to the lower index.
pub fn magnitude_mask(theta: &[f64], k: usize) -> CoordMask {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    let k = k.min(theta.len());
    if k > 0 && k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| {
            theta[b].abs().total_cmp(&theta[a].abs()).then(a.cmp(&b))
        });
    }
    CoordMask::from_indices(theta.len(), &idx[..k])
}

/// This round's coordinate mask for the sparse baselines.
pub fn round_mask(cfg: &FedConfig, theta: &[f64], round: usize, rng: &mut StreamRng) -> Option<CoordMask> {
    let d = theta.len();
    match cfg.method {
        Method::FedMefLike => Some(magnitude_mask(theta, sparse_kept(d))),
        Method::NeuLiteLike => Some(CoordMask::from_range(d, block_range(d, round))),
        Method::FedSelectLike => {
            let picked = sample_indices(rng, d, sparse_kept(d)).into_vec();
            Some(CoordMask::from_indices(d, &picked))
        }
        _ => None,
    }
}

/// `(1/N) Σ_i Δ_i`, summed in the order given.
pub fn average_deltas(deltas: &[Vec<f64>]) -> Vec<f64> {
    let n = deltas.len() as f64;
    let mut mean = vec![0.0; deltas.first().map_or(0, Vec::len)];
    for delta in deltas {
        mean.iter_mut().zip(delta).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Everything the round loop needs besides the config.
pub struct Federation<'a> {
    pub clients: Vec<&'a dyn Objective>,
    pub evaluator: &'a dyn Evaluator,
    pub schedule: Schedule,
}

impl<'a> Federation<'a> {
    pub fn new(clients: Vec<&'a dyn Objective>, evaluator: &'a dyn Evaluator) -> Self {
        Self {
            clients,
            evaluator,
            schedule: Schedule::Parallel,
        }
    }

    fn layout(&self) -> Result<&Layout> {
        let first = self
            .clients
            .first()
            .ok_or_else(|| Error::Config("federation has no clients".into()))?;
        let layout = first.layout();
        if self.clients.iter().any(|c| c.layout() != layout) {
            return Err(Error::Config("clients disagree on the model layout".into()));
        }
        Ok(layout)
    }
}

/// Per-round outputs beyond the new model.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub metrics: RoundMetrics,
    /// Client deltas in id order, kept only when asked for.
    pub deltas: Option<Vec<Vec<f64>>>,
    pub bases: Option<RoundBases>,
}

/// One synchronous round with full participation. Advances `state` from
/// `θ^t` to `θ^{t+1}`.
pub fn server_round(
    state: &mut ServerState,
    fed: &Federation<'_>,
    cfg: &FedConfig,
    round: usize,
    keep_deltas: bool,
) -> Result<RoundReport> {
    let layout = fed.layout()?;
    if cfg.clients != fed.clients.len() {
        return Err(Error::Config(format!(
            "config has {} clients, federation has {}",
            cfg.clients,
            fed.clients.len()
        )));
    }
    if state.theta.len() != layout.dim() {
        return Err(Error::Shape {
            expected: layout.dim(),
            got: state.theta.len(),
        });
    }
    let seeds = SeedTree::new(cfg.seeds.master);
    let t = round as u64;
    let bases = sample_bases(cfg, layout, &mut seeds.stream(Purpose::Basis, t, 0))?;
    let mask = round_mask(cfg, &state.theta, round, &mut seeds.stream(Purpose::Server, t, 0));
    let rule = LocalRule {
        bases: &bases,
        mask: mask.as_ref(),
        momentum: if cfg.method.client_momentum() { cfg.momentum } else { 0.0 },
        storage: cfg.storage,
        record_drift: cfg.record_drift,
        record_trajectory: false,
    };

    let grad_norm_sq = fed.evaluator.grad_norm_sq(&state.theta)?;
    let theta_t = &state.theta;
    let run = |i: usize| -> Result<ClientOutcome> {
        let mut rng = seeds.stream(Purpose::Client, t, i as u64);
        client_update(fed.clients[i], theta_t, rule, cfg, &mut rng).map_err(|e| Error::Client {
            client: i,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<ClientOutcome> = match &fed.schedule {
        #[cfg(feature = "parallel")]
        Schedule::Parallel => (0..cfg.clients).into_par_iter().map(run).collect::<Result<_>>()?,
        #[cfg(not(feature = "parallel"))]
        Schedule::Parallel => (0..cfg.clients).map(run).collect::<Result<_>>()?,
        Schedule::Sequential(order) => {
            let mut slots: Vec<Option<ClientOutcome>> = vec![None; cfg.clients];
            for &i in order {
                slots[i] = Some(run(i)?);
            }
            slots
                .into_iter()
                .enumerate()
                .map(|(i, o)| o.ok_or_else(|| Error::Config(format!("schedule skips client {i}"))))
                .collect::<Result<_>>()?
        }
    };

    let drift = cfg
        .record_drift
        .then(|| outcomes.iter().map(|o| o.drift.unwrap_or(0.0)).sum::<f64>() / cfg.clients as f64);
    let deltas: Vec<Vec<f64>> = outcomes.into_iter().map(|o| o.delta).collect();
    let mean = average_deltas(&deltas);
    match state.velocity.as_mut() {
        Some(v) => {
            for ((th, v), m) in state.theta.iter_mut().zip(v.iter_mut()).zip(&mean) {
                *v = cfg.momentum * *v + m;
                *th += *v;
            }
        }
        None => state.theta.iter_mut().zip(&mean).for_each(|(th, m)| *th += m),
    }
    if state.theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("global model"));
    }

    let score = fed.evaluator.score(&state.theta)?;
    let per_client = uplink_count(cfg, layout, round);
    Ok(RoundReport {
        metrics: RoundMetrics {
            round,
            train_loss: score.loss,
            test_accuracy: score.accuracy,
            grad_norm_sq,
            drift,
            uplink_per_client: per_client,
            uplink_total: per_client * cfg.clients,
        },
        deltas: keep_deltas.then_some(deltas),
        bases: keep_deltas.then_some(bases),
    })
}

/// Output of [`run_method`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub theta: Vec<f64>,
}

/// Runs `cfg.rounds` rounds of `cfg.method` from `theta0`.
pub fn run_method(cfg: &FedConfig, fed: &Federation<'_>, theta0: Vec<f64>) -> Result<RunOutput> {
    run_method_with(cfg, fed, theta0, |_, _| Ok(()))
}

/// [`run_method`] with a callback after every round.
pub fn run_method_with(
    cfg: &FedConfig,
    fed: &Federation<'_>,
    theta0: Vec<f64>,
    mut on_round: impl FnMut(&RoundMetrics, &ServerState) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate(fed.layout()?)?;
    let mut state = ServerState::new(theta0, cfg.method);
    let mut metrics = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let report = server_round(&mut state, fed, cfg, t, false)?;
        on_round(&report.metrics, &state)?;
        metrics.push(report.metrics);
    }
    Ok(RunOutput {
        metrics,
        theta: state.theta,
    })
}

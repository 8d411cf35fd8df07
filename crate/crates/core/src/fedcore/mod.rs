//! The federated round engine.
//!
//! Every method shares one loop: the server samples this round's
//! projection or mask from the master seed, each client runs its local
//! steps from `θ^t` on its own derived stream, and the deltas are averaged
//! with weight `1/N` in client-id order. Methods differ only in the local
//! rule and in whether the server applies momentum to the mean delta.

mod client;
mod config;
mod eval;
mod round;

pub use client::{
    client_update, client_update_fedavg_client_momentum, client_update_fedslop, ClientOutcome, CoordMask,
    LocalRule, RoundBases,
};
pub use config::{FedConfig, LocalSteps, Method, MomentumStorage, ProjectionMode, Seeds, SPARSE_DENOMINATOR};
pub use eval::DatasetEvaluator;
pub use round::{
    average_deltas, block_range, magnitude_mask, round_mask, run_method, run_method_with, sample_bases,
    server_round, sparse_kept, Evaluator, Federation, RoundMetrics, RoundReport, RunOutput, Schedule, Score,
    ServerState,
};

use crate::params::{Layout, SegmentKind};

/// Real numbers one client uploads in round `round`.
///
/// * projected, flat: `r` subspace coordinates;
/// * projected, per layer: `Σ_ℓ min(r, out_ℓ)·in_ℓ` plus every unprojected segment;
/// * dense methods: `d` (the trainable dimension);
/// * magnitude and random-subset masks: `⌈d/7⌉`;
/// * block cycling: the size of this round's block.
pub fn uplink_count(cfg: &FedConfig, layout: &Layout, round: usize) -> usize {
    let d = layout.dim();
    match cfg.method {
        Method::FedSlop => match cfg.projection {
            ProjectionMode::Flat => cfg.rank.min(d),
            ProjectionMode::PerLayer => layout
                .segments()
                .iter()
                .map(|seg| match seg.kind {
                    SegmentKind::Weight { out, inp } => cfg.rank.min(out) * inp,
                    _ => seg.len(),
                })
                .sum(),
        },
        Method::FedAvgM | Method::FedAvgClientMomentum | Method::FedLoraM => d,
        Method::FedMefLike | Method::FedSelectLike => sparse_kept(d),
        Method::NeuLiteLike => block_range(d, round).len(),
    }
}

/// Human-readable form of [`uplink_count`]'s rule for `cfg.method`.
pub fn uplink_formula(cfg: &FedConfig) -> &'static str {
    match (cfg.method, cfg.projection) {
        (Method::FedSlop, ProjectionMode::Flat) => "r subspace coordinates",
        (Method::FedSlop, ProjectionMode::PerLayer) => {
            "sum over weight matrices of min(r, out)*in, plus dense bias lengths"
        }
        (Method::FedAvgM | Method::FedAvgClientMomentum, _) => "d dense coordinates",
        (Method::FedLoraM, _) => "d trainable adapter and bias coordinates",
        (Method::FedMefLike | Method::FedSelectLike, _) => "ceil(d/7) masked coordinates",
        (Method::NeuLiteLike, _) => "length of block (t mod 7) of 7 contiguous near-equal blocks",
    }
}

#[cfg(test)]
mod tests;

//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export takes plain numbers and returns a flat `Float64Array`, so
//! the page needs no glue beyond what `wasm-bindgen` generates.

use fedslop::data::{dirichlet_partition, partition_stats, PartitionSpec};
use fedslop::fedcore::{run_method, FedConfig, Federation, LocalSteps, Method, MomentumStorage, ProjectionMode, Seeds};
use fedslop::objectives::{make_synthetic_federation, SyntheticSpec};
use fedslop::rng::{Purpose, SeedTree};
use fedslop::subspace::{norm_sq, sample_stiefel};
use wasm_bindgen::prelude::*;

fn js(e: fedslop::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Draws `samples` bases from St(d, r) and projects a fixed unit vector.
///
/// Returns `[mean ratio, r/d, bins…]`: the mean of `‖Πg‖²/‖g‖²` and a
/// 20-bin histogram of it over `[0, 1]`.
#[wasm_bindgen]
pub fn projector_energy(d: usize, r: usize, samples: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let g: Vec<f64> = (0..d).map(|j| 1.0 / (d as f64).sqrt() * if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut rng = SeedTree::new(seed).stream(Purpose::Aux, 0, 0);
    let mut bins = [0.0; 20];
    let mut total = 0.0;
    for _ in 0..samples {
        let p = sample_stiefel(d, r, &mut rng).map_err(js)?;
        let ratio = norm_sq(&p.project(&g).map_err(js)?);
        total += ratio;
        bins[((ratio * 20.0) as usize).min(19)] += 1.0;
    }
    let n = samples.max(1) as f64;
    let mut out = vec![total / n, r as f64 / d as f64];
    out.extend(bins.iter().map(|b| b / n));
    Ok(out)
}

/// Splits `samples` balanced labels over ten classes among `clients` with a
/// Dirichlet(`alpha`) prior. Returns `[mean TV, counts…]` with the counts
/// laid out client-major, ten per client.
#[wasm_bindgen]
pub fn label_split(clients: usize, alpha: f64, samples: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let labels: Vec<u8> = (0..samples).map(|i| (i % 10) as u8).collect();
    let part = dirichlet_partition(&labels, &PartitionSpec { clients, alpha, seed }).map_err(js)?;
    let stats = partition_stats(&part, &labels);
    let mut out = vec![stats.mean_tv];
    for h in &stats.histograms {
        out.extend((0..10).map(|c| h.get(c).copied().unwrap_or(0) as f64));
    }
    Ok(out)
}

/// Squared global gradient norm per round on a quadratic federation, for
/// projected momentum at rank `r` followed by the unprojected baseline:
/// `rounds` values each.
#[wasm_bindgen]
pub fn convergence(dim: usize, r: usize, clients: usize, rounds: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let fed = make_synthetic_federation(&SyntheticSpec {
        clients,
        dim,
        hetero: 0.5,
        noise: 0.2,
        curvature: None,
        seed,
    })
    .map_err(js)?;
    let federation = Federation::new(fed.objectives(), &fed);
    let mut out = Vec::with_capacity(2 * rounds);
    for method in [Method::FedSlop, Method::FedAvgClientMomentum] {
        let cfg = FedConfig {
            method,
            clients,
            rounds,
            local_steps: LocalSteps::Fixed(4),
            stepsize: 0.3 / fed.smoothness,
            momentum: 0.5,
            rank: r,
            batch: 1,
            projection: ProjectionMode::Flat,
            storage: MomentumStorage::Factored,
            seeds: Seeds {
                master: seed,
                data: seed,
                init: seed,
            },
            record_drift: false,
        };
        let run = run_method(&cfg, &federation, vec![1.0; dim]).map_err(js)?;
        out.extend(run.metrics.iter().map(|m| m.grad_norm_sq));
    }
    Ok(out)
}

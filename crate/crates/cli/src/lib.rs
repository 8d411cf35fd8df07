//! Experiment runner for the `fedslop` engine.
//!
//! A run config names a method, a data source (MNIST split over clients by
//! a Dirichlet label prior, or a synthetic quadratic federation) and the
//! training hyperparameters. Running it produces one metrics file per
//! seed, a summary with seed means and sample deviations, and seed-mean
//! curves. Sweeps vary one or two keys and add plot-ready grids.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod sweep;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::{CliError, Result};
pub use experiment::{data_dir, run_all_seeds, RunSummary, SeedResult, DATA_DIR_ENV};
pub use output::{emit_plot_data, strip_timestamp, write_run};
pub use sweep::run_sweep;

use std::path::Path;

/// Parses, runs and writes one experiment.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let summary = run_all_seeds(cfg)?;
    write_run(&summary, out)?;
    Ok(summary)
}

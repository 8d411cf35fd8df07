//! Federated optimization with per-round random subspace projections.
//!
//! Every round the server draws a Haar-random orthonormal basis `P_t`
//! (shared with clients through a seed), clients run momentum SGD whose
//! gradients are projected onto `span(P_t)`, and the server averages the
//! resulting model deltas. The crate also carries the comparison methods,
//! the data pipeline for label-skewed MNIST federations, and closed-form
//! step-size and convergence-bound evaluators.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fedcore;
pub mod linalg;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod subspace;
pub mod theory;

pub use error::{Error, Result};

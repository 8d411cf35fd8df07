use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::Layout;

/// Training method driven by the round loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Projected client momentum with a fresh random subspace each round.
    FedSlop,
    /// Dense local SGD, momentum applied by the server to the mean delta.
    FedAvgM,
    /// Dense client momentum, no projection.
    FedAvgClientMomentum,
    /// Local SGD restricted to the largest-magnitude coordinates of `θ^t`.
    FedMefLike,
    /// Local SGD restricted to one contiguous block, cycling per round.
    NeuLiteLike,
    /// Local SGD restricted to a random coordinate subset shared per round.
    FedSelectLike,
    /// Server-momentum training of low-rank adapters over a frozen base.
    FedLoraM,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::FedSlop,
        Method::FedAvgM,
        Method::FedAvgClientMomentum,
        Method::FedMefLike,
        Method::NeuLiteLike,
        Method::FedSelectLike,
        Method::FedLoraM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FedSlop => "fedslop",
            Method::FedAvgM => "fedavg_m",
            Method::FedAvgClientMomentum => "fedavg_client_momentum",
            Method::FedMefLike => "fedmef_like",
            Method::NeuLiteLike => "neulite_like",
            Method::FedSelectLike => "fedselect_like",
            Method::FedLoraM => "fedlora_m",
        }
    }

    /// Whether the server keeps a momentum buffer.
    pub fn server_momentum(self) -> bool {
        matches!(self, Method::FedAvgM | Method::FedLoraM)
    }

    /// Whether clients run heavy-ball momentum locally.
    pub fn client_momentum(self) -> bool {
        matches!(self, Method::FedSlop | Method::FedAvgClientMomentum)
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::FedMefLike | Method::NeuLiteLike | Method::FedSelectLike)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// One basis on `St(d, r)` for the whole parameter vector.
    Flat,
    /// One basis on `St(out, min(r, out))` per weight matrix, acting on the
    /// output dimension. Biases stay dense.
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumStorage {
    /// `v ∈ R^d`.
    Dense,
    /// Subspace coordinates `w` with `v = P w`.
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSteps {
    Fixed(usize),
    /// One pass over the client's data: `τ_i = ⌈n_i / b⌉`.
    Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    /// Bases, client minibatches and noise, server-side masks.
    pub master: u64,
    /// Data partition and synthetic problem construction.
    pub data: u64,
    /// Model initialization.
    pub init: u64,
}

/// Denominator of the kept fraction for the sparse baselines.
pub const SPARSE_DENOMINATOR: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub method: Method,
    pub clients: usize,
    pub rounds: usize,
    pub local_steps: LocalSteps,
    pub stepsize: f64,
    /// Client momentum for projected/client-momentum methods, server
    /// momentum for the server-momentum ones.
    pub momentum: f64,
    pub rank: usize,
    pub batch: usize,
    pub projection: ProjectionMode,
    pub storage: MomentumStorage,
    pub seeds: Seeds,
    /// Record `D_t` every round (costs one distance per local step).
    pub record_drift: bool,
}

impl FedConfig {
    /// Checks every invariant against a model of layout `layout`.
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.clients == 0 {
            return fail("clients must be at least 1".into());
        }
        if !(self.stepsize > 0.0 && self.stepsize.is_finite()) {
            return fail(format!("stepsize must be positive, got {}", self.stepsize));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch == 0 {
            return fail("batch must be at least 1".into());
        }
        if self.local_steps == LocalSteps::Fixed(0) {
            return fail("local_steps must be at least 1".into());
        }
        if self.method == Method::FedSlop {
            let d = layout.dim();
            match self.projection {
                ProjectionMode::Flat if self.rank == 0 || self.rank > d => {
                    return fail(format!("rank {} outside [1, {d}]", self.rank));
                }
                ProjectionMode::PerLayer if self.rank == 0 => {
                    return fail("rank must be at least 1".into());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

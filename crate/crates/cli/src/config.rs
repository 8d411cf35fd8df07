//! Run configurations: strict TOML, every key known, every value checked.

use std::path::Path;

use serde::Deserialize;

use fedslop::fedcore::{FedConfig, LocalSteps, Method, MomentumStorage, ProjectionMode, Seeds};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub method: String,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub instrument: InstrumentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    pub clients: usize,
    /// Dirichlet concentration of the label split (MNIST only).
    pub alpha: Option<f64>,
    /// Use only the first `n` training images.
    pub train_limit: Option<usize>,
    /// Use only the first `n` test images.
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StepsSetting {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StepsizeSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// A positive integer, or `"epoch"` for one pass over local data.
    pub local_steps: StepsSetting,
    /// A positive number, or `"corollary"` for the tuned theoretical value
    /// (synthetic problems only).
    pub stepsize: StepsizeSetting,
    pub momentum: f64,
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSetting {
    Flat,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageSetting {
    Dense,
    Factored,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub rank: usize,
    pub mode: ModeSetting,
    pub storage: StorageSetting,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            mode: ModeSetting::Flat,
            storage: StorageSetting::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    /// Adapter rank for `fedlora_m`.
    pub lora_rank: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden: 128,
            lora_rank: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Training samples in the fixed evaluation batch; 0 means all of them.
    pub grad_samples: usize,
    /// Test accuracy every this many rounds (and always at the last one).
    pub every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grad_samples: 2048,
            every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    /// Target heterogeneity `σ_G`.
    pub hetero: f64,
    /// Gradient noise `σ_L`.
    pub noise: f64,
    pub curvature: Option<Vec<f64>>,
    /// Starting point, one value per coordinate; zero by default.
    pub start: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    #[serde(default)]
    pub record_drift: bool,
}

/// Reads and checks a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config_str(&text)
}

/// Parses config text in strict mode and validates it.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
        path: String::new(),
        message: e.message().to_string(),
    })?;
    from_table(value)
}

pub(crate) fn from_table(table: toml::Table) -> Result<RunConfig> {
    let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        CliError::Config {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn method_id(&self) -> Result<Method> {
        self.method
            .parse()
            .map_err(|_| invalid("method", format!("unknown method `{}`", self.method)))
    }

    pub fn local_steps(&self) -> Result<LocalSteps> {
        match &self.train.local_steps {
            StepsSetting::Fixed(0) => Err(invalid("train.local_steps", "must be at least 1")),
            StepsSetting::Fixed(k) => Ok(LocalSteps::Fixed(*k)),
            StepsSetting::Named(s) if s == "epoch" => Ok(LocalSteps::Epoch),
            StepsSetting::Named(s) => Err(invalid(
                "train.local_steps",
                format!("expected a positive integer or \"epoch\", got \"{s}\""),
            )),
        }
    }

    /// The fixed step size, or `None` for the tuned one.
    pub fn fixed_stepsize(&self) -> Result<Option<f64>> {
        match &self.train.stepsize {
            StepsizeSetting::Fixed(eta) if *eta > 0.0 && eta.is_finite() => Ok(Some(*eta)),
            StepsizeSetting::Fixed(eta) => Err(invalid("train.stepsize", format!("must be positive, got {eta}"))),
            StepsizeSetting::Named(s) if s == "corollary" => Ok(None),
            StepsizeSetting::Named(s) => Err(invalid(
                "train.stepsize",
                format!("expected a positive number or \"corollary\", got \"{s}\""),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be a non-empty file-name-safe string"));
        }
        let method = self.method_id()?;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.data.clients == 0 {
            return Err(invalid("data.clients", "must be at least 1"));
        }
        let steps = self.local_steps()?;
        let eta = self.fixed_stepsize()?;
        if !(0.0..1.0).contains(&self.train.momentum) {
            return Err(invalid("train.momentum", format!("must lie in [0, 1), got {}", self.train.momentum)));
        }
        if self.train.batch == 0 {
            return Err(invalid("train.batch", "must be at least 1"));
        }
        if self.projection.rank == 0 {
            return Err(invalid("projection.rank", "must be at least 1"));
        }
        if self.eval.every == 0 {
            return Err(invalid("eval.every", "must be at least 1"));
        }
        if self.model.lora_rank == 0 || self.model.hidden == 0 {
            return Err(invalid("model", "hidden and lora_rank must be at least 1"));
        }
        match self.data.source {
            Source::Mnist => {
                match self.data.alpha {
                    Some(a) if a > 0.0 && a.is_finite() => {}
                    Some(a) => return Err(invalid("data.alpha", format!("must be positive, got {a}"))),
                    None => return Err(invalid("data.alpha", "required for MNIST")),
                }
                if self.synthetic.is_some() {
                    return Err(invalid("synthetic", "only allowed with data.source = \"synthetic\""));
                }
                if eta.is_none() {
                    return Err(invalid("train.stepsize", "\"corollary\" needs a synthetic problem"));
                }
                if self.data.train_limit == Some(0) || self.data.test_limit == Some(0) {
                    return Err(invalid("data", "limits must be positive"));
                }
            }
            Source::Synthetic => {
                let Some(s) = &self.synthetic else {
                    return Err(invalid("synthetic", "required for data.source = \"synthetic\""));
                };
                if s.dim == 0 {
                    return Err(invalid("synthetic.dim", "must be at least 1"));
                }
                if !(s.hetero >= 0.0) || !(s.noise >= 0.0) {
                    return Err(invalid("synthetic", "hetero and noise must be non-negative"));
                }
                if let Some(c) = &s.curvature {
                    if c.len() != s.dim || c.iter().any(|a| !(*a > 0.0)) {
                        return Err(invalid("synthetic.curvature", "needs `dim` positive entries"));
                    }
                }
                if steps == LocalSteps::Epoch {
                    return Err(invalid("train.local_steps", "\"epoch\" needs a dataset"));
                }
                if method == Method::FedLoraM {
                    return Err(invalid("method", "fedlora_m needs the MLP on MNIST"));
                }
                if method == Method::FedSlop && self.projection.rank > s.dim {
                    return Err(invalid(
                        "projection.rank",
                        format!("rank {} exceeds dimension {}", self.projection.rank, s.dim),
                    ));
                }
                if self.data.alpha.is_some() {
                    return Err(invalid("data.alpha", "only used for MNIST"));
                }
            }
        }
        Ok(())
    }

    /// The engine config for one seed. `stepsize` resolves the tuned case.
    pub fn fed_config(&self, seed: u64, stepsize: f64) -> Result<FedConfig> {
        Ok(FedConfig {
            method: self.method_id()?,
            clients: self.data.clients,
            rounds: self.rounds,
            local_steps: self.local_steps()?,
            stepsize,
            momentum: self.train.momentum,
            rank: self.projection.rank,
            batch: self.train.batch,
            projection: match self.projection.mode {
                ModeSetting::Flat => ProjectionMode::Flat,
                ModeSetting::PerLayer => ProjectionMode::PerLayer,
            },
            storage: match self.projection.storage {
                StorageSetting::Dense => MomentumStorage::Dense,
                StorageSetting::Factored => MomentumStorage::Factored,
            },
            seeds: Seeds {
                master: seed,
                data: seed,
                init: seed,
            },
            record_drift: self.instrument.record_drift,
        })
    }

    /// The reduced run used by `--smoke`: at most 5 rounds, 2 clients, and
    /// for MNIST at most 2,000 training and 1,000 test images.
    pub fn smoke(&self) -> RunConfig {
        let mut cfg = self.clone();
        cfg.rounds = cfg.rounds.min(5);
        cfg.data.clients = 2;
        if cfg.data.source == Source::Mnist {
            cfg.data.train_limit = Some(cfg.data.train_limit.unwrap_or(usize::MAX).min(2_000));
            cfg.data.test_limit = Some(cfg.data.test_limit.unwrap_or(usize::MAX).min(1_000));
            cfg.eval.grad_samples = cfg.eval.grad_samples.min(500);
        }
        cfg
    }
}

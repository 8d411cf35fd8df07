//! Building a federation from a config and running it for every seed.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use fedslop::data::{dirichlet_partition, load_idx, LabeledDataset, PartitionSpec};
use fedslop::fedcore::{
    run_method, uplink_formula, DatasetEvaluator, Evaluator, Federation, Method, ProjectionMode, RoundMetrics,
    Score,
};
use fedslop::objectives::{
    lora_base, make_synthetic_federation, DatasetObjective, Logistic, LoraMlp, Mlp, Model, Objective, SyntheticSpec,
};
use fedslop::rng::{Purpose, SeedTree};
use fedslop::theory::{corollary_stepsize, drift_bound, theorem_bound, TheoryConstants};

use crate::config::{ModelKind, RunConfig, Source};
use crate::error::{CliError, Result};

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "FEDSLOP_DATA_DIR";

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// `$FEDSLOP_DATA_DIR`, or `data/mnist` under the working directory.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// Fails with the first missing MNIST file.
pub fn check_mnist(dir: &Path) -> Result<()> {
    for name in MNIST_FILES {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::MissingData(path));
        }
    }
    Ok(())
}

type Mnist = (Arc<LabeledDataset>, Arc<LabeledDataset>);

/// Loads (train, test) once per directory and process.
pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    static CACHE: OnceLock<Mutex<HashMap<PathBuf, Mnist>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("dataset cache poisoned");
    if let Some(hit) = guard.get(dir) {
        return Ok(hit.clone());
    }
    check_mnist(dir)?;
    let train = load_idx(dir.join(MNIST_FILES[0]), dir.join(MNIST_FILES[1]))?;
    let test = load_idx(dir.join(MNIST_FILES[2]), dir.join(MNIST_FILES[3]))?;
    let pair = (Arc::new(train), Arc::new(test));
    guard.insert(dir.to_path_buf(), pair.clone());
    Ok(pair)
}

fn truncate(data: &Arc<LabeledDataset>, limit: Option<usize>) -> Result<Arc<LabeledDataset>> {
    match limit {
        Some(n) if n < data.len() => Ok(Arc::new(data.subset(&(0..n).collect::<Vec<_>>())?)),
        _ => Ok(data.clone()),
    }
}

/// Theory quantities attached to a synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub constants: TheoryConstants,
    /// `None` when the step size is above the ceiling.
    pub theorem_bound: Option<f64>,
    /// Per-round drift bound at `θ^t`, when drift is recorded.
    pub drift_bounds: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub stepsize: f64,
    pub metrics: Vec<RoundMetrics>,
    pub theory: Option<TheoryReport>,
}

impl SeedResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.test_accuracy)
    }

    pub fn final_loss(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.train_loss)
    }

    /// `(1/T) Σ_t ‖∇f(θ^t)‖²`.
    pub fn mean_grad_norm_sq(&self) -> f64 {
        self.metrics.iter().map(|m| m.grad_norm_sq).sum::<f64>() / self.metrics.len().max(1) as f64
    }

    pub fn uplink_total(&self) -> usize {
        self.metrics.iter().map(|m| m.uplink_total).sum()
    }
}

/// All seeds of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub method: Method,
    pub uplink_formula: &'static str,
    pub seeds: Vec<SeedResult>,
}

/// Mean and `n − 1` sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunSummary {
    pub fn final_accuracies(&self) -> Vec<f64> {
        self.seeds.iter().filter_map(SeedResult::final_accuracy).collect()
    }

    /// Mean and sample std of the final test accuracy.
    pub fn accuracy(&self) -> (f64, f64) {
        mean_std(&self.final_accuracies())
    }

    /// Mean and sample std of the averaged squared gradient norm.
    pub fn grad_norm(&self) -> (f64, f64) {
        mean_std(&self.seeds.iter().map(SeedResult::mean_grad_norm_sq).collect::<Vec<_>>())
    }

    /// Mean uplink per round, over seeds and rounds.
    pub fn uplink_per_round(&self) -> f64 {
        let rounds: usize = self.seeds.iter().map(|s| s.metrics.len()).sum();
        let total: usize = self.seeds.iter().map(SeedResult::uplink_total).sum();
        total as f64 / rounds.max(1) as f64
    }
}

/// Test accuracy only on cadence rounds and the last round.
struct Cadence<'a> {
    inner: &'a DatasetEvaluator,
    every: usize,
    rounds: usize,
    calls: AtomicUsize,
}

impl Evaluator for Cadence<'_> {
    fn grad_norm_sq(&self, theta: &[f64]) -> fedslop::Result<f64> {
        self.inner.grad_norm_sq(theta)
    }

    fn score(&self, theta: &[f64]) -> fedslop::Result<Score> {
        let t = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if t.is_multiple_of(self.every) || t == self.rounds {
            self.inner.score(theta)
        } else {
            Ok(Score {
                loss: self.inner.train.loss(theta)?,
                accuracy: None,
            })
        }
    }
}

fn run_mnist_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<SeedResult> {
    let (train, test) = load_mnist(dir)?;
    let train = truncate(&train, cfg.data.train_limit)?;
    let test = truncate(&test, cfg.data.test_limit)?;
    let method = cfg.method_id()?;
    let alpha = cfg.data.alpha.expect("validated");
    let partition = dirichlet_partition(
        &train.labels,
        &PartitionSpec {
            clients: cfg.data.clients,
            alpha,
            seed,
        },
    )?;

    let init = SeedTree::new(seed);
    let classes = train.classes;
    let (model, theta0): (Arc<dyn Model>, Vec<f64>) = match (method, cfg.model.kind) {
        (Method::FedLoraM, ModelKind::Mlp) => {
            let base = Mlp::new(train.width(), cfg.model.hidden, classes);
            let w0 = lora_base(&base, &mut init.stream(Purpose::Init, 0, 0));
            let lora = LoraMlp::new(base, w0, cfg.model.lora_rank);
            let theta = lora.init(&mut init.stream(Purpose::Init, 1, 0));
            (Arc::new(lora), theta)
        }
        (Method::FedLoraM, ModelKind::Logistic) => {
            return Err(CliError::Config {
                path: "model.kind".into(),
                message: "fedlora_m needs the MLP".into(),
            })
        }
        (_, ModelKind::Mlp) => {
            let m = Mlp::new(train.width(), cfg.model.hidden, classes);
            let theta = m.init(&mut init.stream(Purpose::Init, 0, 0));
            (Arc::new(m), theta)
        }
        (_, ModelKind::Logistic) => {
            let m = Logistic::new(train.width(), classes);
            let theta = m.init(&mut init.stream(Purpose::Init, 0, 0));
            (Arc::new(m), theta)
        }
    };

    let clients: Vec<DatasetObjective> = partition
        .assignment
        .iter()
        .map(|rows| DatasetObjective::new(model.clone(), train.clone(), rows.clone()))
        .collect::<fedslop::Result<_>>()?;
    let eval_rows: Vec<usize> = if cfg.eval.grad_samples == 0 || cfg.eval.grad_samples >= train.len() {
        (0..train.len()).collect()
    } else {
        let mut rng = init.stream(Purpose::Aux, 0, 0);
        let mut rows = rand::seq::index::sample(&mut rng, train.len(), cfg.eval.grad_samples).into_vec();
        rows.sort_unstable();
        rows
    };
    let evaluator = DatasetEvaluator {
        train: DatasetObjective::new(model.clone(), train.clone(), eval_rows)?,
        test: Some(test),
    };
    let cadence = Cadence {
        inner: &evaluator,
        every: cfg.eval.every,
        rounds: cfg.rounds,
        calls: AtomicUsize::new(0),
    };
    let stepsize = cfg.fixed_stepsize()?.expect("validated");
    let fed_cfg = cfg.fed_config(seed, stepsize)?;
    let objectives: Vec<&dyn Objective> = clients.iter().map(|c| c as &dyn Objective).collect();
    let federation = Federation::new(objectives, &cadence);
    let out = run_method(&fed_cfg, &federation, theta0)?;
    Ok(SeedResult {
        seed,
        stepsize,
        metrics: out.metrics,
        theory: None,
    })
}

fn run_synthetic_seed(cfg: &RunConfig, seed: u64) -> Result<SeedResult> {
    let s = cfg.synthetic.as_ref().expect("validated");
    let fed = make_synthetic_federation(&SyntheticSpec {
        clients: cfg.data.clients,
        dim: s.dim,
        hetero: s.hetero,
        noise: s.noise,
        curvature: s.curvature.clone(),
        seed,
    })?;
    let method = cfg.method_id()?;
    let theta0 = vec![s.start.unwrap_or(0.0); s.dim];
    let tau = match cfg.local_steps()? {
        fedslop::fedcore::LocalSteps::Fixed(k) => k,
        fedslop::fedcore::LocalSteps::Epoch => unreachable!("validated"),
    };
    let delta = if method == Method::FedSlop && cfg.projection.mode == crate::config::ModeSetting::Flat {
        cfg.projection.rank as f64 / s.dim as f64
    } else {
        1.0
    };
    let constants = TheoryConstants {
        l: fed.smoothness,
        sigma_l: fed.sigma_l,
        sigma_g: fed.sigma_g,
        mu: cfg.train.momentum,
        tau,
        delta,
        n: cfg.data.clients,
        t: cfg.rounds,
        delta0: fed.global_loss(&theta0)? - fed.f_star,
    };
    let stepsize = match cfg.fixed_stepsize()? {
        Some(eta) => eta,
        None => corollary_stepsize(&constants)?,
    };
    let fed_cfg = cfg.fed_config(seed, stepsize)?;
    let federation = Federation::new(fed.objectives(), &fed);
    let out = run_method(&fed_cfg, &federation, theta0)?;

    // The bounds describe projected client momentum with flat bases or none.
    let covered = matches!(method, Method::FedSlop | Method::FedAvgClientMomentum)
        && !(method == Method::FedSlop && fed_cfg.projection == ProjectionMode::PerLayer);
    let theory = covered.then(|| TheoryReport {
        theorem_bound: theorem_bound(&constants, stepsize).ok(),
        drift_bounds: cfg.instrument.record_drift.then(|| {
            out.metrics
                .iter()
                .map(|m| drift_bound(&constants, stepsize, m.grad_norm_sq).ok())
                .collect()
        }),
        constants,
    });
    Ok(SeedResult {
        seed,
        stepsize,
        metrics: out.metrics,
        theory,
    })
}

/// Runs one seed of `cfg`.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedResult> {
    match cfg.data.source {
        Source::Mnist => run_mnist_seed(cfg, seed, &data_dir()),
        Source::Synthetic => run_synthetic_seed(cfg, seed),
    }
}

/// Runs every seed (concurrently, on the current rayon pool).
pub fn run_all_seeds(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.data.source == Source::Mnist {
        check_mnist(&data_dir())?;
    }
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let method = cfg.method_id()?;
    let formula = uplink_formula(&cfg.fed_config(0, 1.0)?);
    Ok(RunSummary {
        name: cfg.name.clone(),
        method,
        uplink_formula: formula,
        seeds,
    })
}

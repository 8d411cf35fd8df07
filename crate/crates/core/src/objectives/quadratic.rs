//! Synthetic quadratic federations with known constants.
//!
//! Client `i` minimizes `F_i(θ) = ½ (θ − c_i)ᵀ A (θ − c_i)` with a shared
//! diagonal `A`. The global objective is `½ (θ − c̄)ᵀ A (θ − c̄) + f*`
//! with `c̄` the mean center, so `L = max A`, the minimizer is `c̄`, and
//! `∇F_i − ∇f = A (c̄ − c_i)` does not depend on `θ`. Stochastic gradients
//! add isotropic Gaussian noise with `E‖ξ‖² = σ_L²`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{BatchSampler, Objective};
use crate::error::{check_len, Error, Result};
use crate::params::Layout;
use crate::rng::{Purpose, SeedTree, StreamRng};

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    curvature: Vec<f64>,
    center: Vec<f64>,
    noise: f64,
    layout: Layout,
}

impl QuadraticObjective {
    pub fn new(curvature: Vec<f64>, center: Vec<f64>, noise: f64) -> Result<Self> {
        check_len(curvature.len(), center.len())?;
        if curvature.is_empty() {
            return Err(Error::InvalidArgument("empty quadratic".into()));
        }
        if curvature.iter().any(|&a| !(a >= 0.0)) || !(noise >= 0.0) {
            return Err(Error::InvalidArgument("curvature and noise must be non-negative".into()));
        }
        let layout = Layout::flat(curvature.len());
        Ok(Self {
            curvature,
            center,
            noise,
            layout,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    /// `σ_L`: root of the expected squared norm of the gradient noise.
    pub fn noise(&self) -> f64 {
        self.noise
    }
}

impl Objective for QuadraticObjective {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn samples(&self) -> Option<usize> {
        None
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(0.5
            * theta
                .iter()
                .zip(&self.center)
                .zip(&self.curvature)
                .map(|((t, c), a)| a * (t - c) * (t - c))
                .sum::<f64>())
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_len(self.dim(), grad.len())?;
        let loss = self.loss(theta)?;
        for (((g, t), c), a) in grad.iter_mut().zip(theta).zip(&self.center).zip(&self.curvature) {
            *g = a * (t - c);
        }
        Ok(loss)
    }

    fn stochastic_grad(
        &self,
        theta: &[f64],
        _sampler: &mut BatchSampler,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64> {
        let loss = self.loss_grad(theta, grad)?;
        if self.noise > 0.0 {
            let scale = self.noise / (self.dim() as f64).sqrt();
            for g in grad.iter_mut() {
                *g += scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(loss)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.curvature.iter().copied().fold(0.0, f64::max))
    }
}

/// Construction parameters for [`make_synthetic_federation`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub dim: usize,
    /// Target `σ_G`: the realized `max_i ‖∇F_i − ∇f‖` equals it exactly.
    pub hetero: f64,
    /// `σ_L` of every client's gradient noise.
    pub noise: f64,
    /// Diagonal of `A`; defaults to `dim` values evenly spaced in `[1, 4]`.
    pub curvature: Option<Vec<f64>>,
    pub seed: u64,
}

/// A set of quadratic clients with its global constants.
#[derive(Debug, Clone)]
pub struct SyntheticFederation {
    pub clients: Vec<QuadraticObjective>,
    pub curvature: Vec<f64>,
    /// Minimizer `c̄` of the global objective.
    pub minimizer: Vec<f64>,
    /// `L = λ_max(A)`.
    pub smoothness: f64,
    /// Realized `max_i ‖∇F_i − ∇f‖` (constant in `θ`).
    pub sigma_g: f64,
    pub sigma_l: f64,
    /// `f* = min f`.
    pub f_star: f64,
}

impl SyntheticFederation {
    /// Builds a federation from explicit client centers.
    pub fn from_centers(curvature: Vec<f64>, centers: Vec<Vec<f64>>, noise: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument("federation needs at least one client".into()));
        }
        let d = curvature.len();
        let n = centers.len() as f64;
        let mut minimizer = vec![0.0; d];
        for c in &centers {
            check_len(d, c.len())?;
            minimizer.iter_mut().zip(c).for_each(|(m, x)| *m += x / n);
        }
        let mut sigma_g: f64 = 0.0;
        let mut f_star = 0.0;
        for c in &centers {
            let mut gap = 0.0;
            let mut energy = 0.0;
            for j in 0..d {
                let diff = minimizer[j] - c[j];
                gap += (curvature[j] * diff).powi(2);
                energy += curvature[j] * diff * diff;
            }
            sigma_g = sigma_g.max(gap.sqrt());
            f_star += 0.5 * energy / n;
        }
        let clients = centers
            .into_iter()
            .map(|c| QuadraticObjective::new(curvature.clone(), c, noise))
            .collect::<Result<Vec<_>>>()?;
        let smoothness = curvature.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            clients,
            curvature,
            minimizer,
            smoothness,
            sigma_g,
            sigma_l: noise,
            f_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    /// `f(θ) = (1/N) Σ F_i(θ)`.
    pub fn global_loss(&self, theta: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for c in &self.clients {
            acc += c.loss(theta)?;
        }
        Ok(acc / self.clients.len() as f64)
    }

    /// `∇f(θ) = A (θ − c̄)`.
    pub fn global_grad(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.minimizer)
            .zip(&self.curvature)
            .map(|((t, m), a)| a * (t - m))
            .collect()
    }

    pub fn objectives(&self) -> Vec<&dyn Objective> {
        self.clients.iter().map(|c| c as &dyn Objective).collect()
    }
}

/// Builds `N` quadratic clients in `R^d` with heterogeneity `σ_G = hetero`
/// and gradient noise `σ_L = noise`.
pub fn make_synthetic_federation(spec: &SyntheticSpec) -> Result<SyntheticFederation> {
    if spec.clients == 0 || spec.dim == 0 {
        return Err(Error::InvalidArgument("clients and dim must be positive".into()));
    }
    if !(spec.hetero >= 0.0) || !(spec.noise >= 0.0) {
        return Err(Error::InvalidArgument("hetero and noise must be non-negative".into()));
    }
    let d = spec.dim;
    let curvature = match &spec.curvature {
        Some(c) => {
            check_len(d, c.len())?;
            c.clone()
        }
        None if d == 1 => vec![1.0],
        None => (0..d).map(|j| 1.0 + 3.0 * j as f64 / (d - 1) as f64).collect(),
    };
    let mut rng = SeedTree::new(spec.seed).stream(Purpose::Problem, 0, 0);
    let minimizer: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();

    // Zero-mean offsets u_i, scaled so that max_i ‖A u_i‖ = hetero.
    let mut offsets: Vec<Vec<f64>> = (0..spec.clients)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let n = spec.clients as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| offsets.iter().map(|u| u[j]).sum::<f64>() / n)
        .collect();
    for u in &mut offsets {
        u.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    let widest = offsets
        .iter()
        .map(|u| {
            u.iter()
                .zip(&curvature)
                .map(|(x, a)| (a * x).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let scale = if widest > 0.0 { spec.hetero / widest } else { 0.0 };
    let centers = offsets
        .into_iter()
        .map(|u| {
            u.iter()
                .zip(&minimizer)
                .map(|(x, m)| m + scale * x)
                .collect()
        })
        .collect();
    let mut fed = SyntheticFederation::from_centers(curvature, centers, spec.noise)?;
    // Keep the requested value when rounding nudges the realized one.
    if spec.clients > 1 && (fed.sigma_g - spec.hetero).abs() <= 1e-12 * spec.hetero.max(1.0) {
        fed.sigma_g = spec.hetero;
    }
    Ok(fed)
}

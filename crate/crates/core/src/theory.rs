//! Closed-form constants and bounds for projected-momentum local SGD.
//!
//! With `τ` local steps, heavy-ball momentum `μ`, subspace ratio `δ = r/d`,
//! smoothness `L`, local noise `σ_L²` and heterogeneity `σ_G²`:
//!
//! * momentum weights `α_{τ,q} = (1 − μ^{τ−q})/(1 − μ)` and `S_τ = Σ_q α_{τ,q}`;
//! * step-size ceiling `η ≤ min{ √((1−μ²)/(6L²τ³)), 1/(L S_τ), √(δ(1−μ)(1−μ²)S_τ/(48L²τ⁴)) }`;
//! * drift `D_t ≤ 6τ⁴/(1−μ²) · η² (δ‖∇f(θ^t)‖² + σ_L² + σ_G²)`;
//! * averaged squared gradient norm over `T` rounds at most
//!   `4Δ₀/(δηS_τT) + 4ηS_τLσ_L²/(δN) + 48η²τ⁴L²(σ_L²+σ_G²)/(δ²(1−μ)(1−μ²)S_τ)`.

use crate::error::{Error, Result};
use crate::params::dist_sq;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumWeights {
    pub tau: usize,
    pub mu: f64,
    /// `α_{τ,q}` for `q = 0..τ`.
    pub alphas: Vec<f64>,
    pub s_tau: f64,
}

pub fn momentum_weights(tau: usize, mu: f64) -> Result<MomentumWeights> {
    if tau == 0 {
        return Err(Error::Domain("τ must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Domain(format!("momentum must lie in [0, 1), got {mu}")));
    }
    let alphas: Vec<f64> = (0..tau)
        .map(|q| {
            if mu == 0.0 {
                1.0
            } else {
                (1.0 - mu.powi((tau - q) as i32)) / (1.0 - mu)
            }
        })
        .collect();
    let s_tau = alphas.iter().sum();
    Ok(MomentumWeights {
        tau,
        mu,
        alphas,
        s_tau,
    })
}

/// Problem and algorithm constants entering the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConstants {
    pub l: f64,
    pub sigma_l: f64,
    pub sigma_g: f64,
    pub mu: f64,
    pub tau: usize,
    /// `δ = r/d`.
    pub delta: f64,
    pub n: usize,
    pub t: usize,
    /// `Δ₀ = f(θ⁰) − f*`.
    pub delta0: f64,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) {
            return Err(Error::Domain("L must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Domain(format!("δ must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.sigma_l >= 0.0 && self.sigma_g >= 0.0) {
            return Err(Error::Domain("noise levels must be non-negative".into()));
        }
        if self.n == 0 || self.t == 0 {
            return Err(Error::Domain("N and T must be positive".into()));
        }
        momentum_weights(self.tau, self.mu).map(|_| ())
    }

    fn s_tau(&self) -> Result<f64> {
        Ok(momentum_weights(self.tau, self.mu)?.s_tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepsizeConstraint {
    /// `√((1−μ²)/(6L²τ³))`, from the drift lemma.
    Drift,
    /// `1/(L S_τ)`.
    Smoothness,
    /// `√(δ(1−μ)(1−μ²)S_τ/(48L²τ⁴))`, keeps the gradient coefficient negative.
    Subspace,
}

/// The three ceilings in order `[Drift, Smoothness, Subspace]`.
pub fn stepsize_ceilings(c: &TheoryConstants) -> Result<[f64; 3]> {
    c.validate()?;
    let s = c.s_tau()?;
    let (l, mu, tau, delta) = (c.l, c.mu, c.tau as f64, c.delta);
    Ok([
        ((1.0 - mu * mu) / (6.0 * l * l * tau.powi(3))).sqrt(),
        1.0 / (l * s),
        (delta * (1.0 - mu) * (1.0 - mu * mu) * s / (48.0 * l * l * tau.powi(4))).sqrt(),
    ])
}

pub fn max_stepsize(c: &TheoryConstants) -> Result<(f64, StepsizeConstraint)> {
    let ceil = stepsize_ceilings(c)?;
    let ids = [
        StepsizeConstraint::Drift,
        StepsizeConstraint::Smoothness,
        StepsizeConstraint::Subspace,
    ];
    let (k, &eta) = ceil
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three ceilings");
    Ok((eta, ids[k]))
}

/// The five summands whose sum is `1/η` for the tuned step size.
pub fn corollary_terms(c: &TheoryConstants) -> Result<[f64; 5]> {
    c.validate()?;
    if !(c.delta0 > 0.0) {
        return Err(Error::Domain(format!("Δ₀ must be positive, got {}", c.delta0)));
    }
    let s = c.s_tau()?;
    let (l, mu, tau, delta) = (c.l, c.mu, c.tau as f64, c.delta);
    let (n, t) = (c.n as f64, c.t as f64);
    let var = c.sigma_l * c.sigma_l + c.sigma_g * c.sigma_g;
    let damp = (1.0 - mu) * (1.0 - mu * mu);
    Ok([
        (6.0 * l * l * tau.powi(3) / (1.0 - mu * mu)).sqrt(),
        l * s,
        (48.0 * l * l * tau.powi(4) / (delta * damp * s)).sqrt(),
        (s * s * l * t * c.sigma_l * c.sigma_l / (n * c.delta0)).sqrt(),
        (12.0 * tau.powi(4) * l * l * t * var / (delta * damp * c.delta0)).cbrt(),
    ])
}

pub fn corollary_stepsize(c: &TheoryConstants) -> Result<f64> {
    Ok(1.0 / corollary_terms(c)?.iter().sum::<f64>())
}

/// `D_t = (1/N) Σ_i Σ_{s<τ} ‖θ_{i,s} − θ^t‖²` for one recorded round.
///
/// `trajectories[i]` holds `θ_{i,0}, …, θ_{i,τ−1}` for client `i`.
pub fn measure_drift(trajectories: &[Vec<Vec<f64>>], theta_t: &[f64]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Instrumentation("no client trajectories recorded".into()));
    }
    let mut total = 0.0;
    for (i, traj) in trajectories.iter().enumerate() {
        for iterate in traj {
            if iterate.len() != theta_t.len() {
                return Err(Error::Instrumentation(format!(
                    "client {i}: iterate of length {} vs model of length {}",
                    iterate.len(),
                    theta_t.len()
                )));
            }
            total += dist_sq(iterate, theta_t);
        }
    }
    Ok(total / trajectories.len() as f64)
}

/// Right-hand side of the drift bound at a point with `‖∇f(θ^t)‖² = grad_norm_sq`.
pub fn drift_bound(c: &TheoryConstants, eta: f64, grad_norm_sq: f64) -> Result<f64> {
    c.validate()?;
    let tau = c.tau as f64;
    let damp = 1.0 - c.mu * c.mu;
    let ceiling_sq = damp / (6.0 * c.l * c.l * tau.powi(3));
    if !(eta > 0.0) || eta * eta > ceiling_sq * (1.0 + 1e-12) {
        return Err(Error::BoundInapplicable(format!(
            "η = {eta} violates η² ≤ (1−μ²)/(6L²τ³) = {ceiling_sq}"
        )));
    }
    let var = c.sigma_l * c.sigma_l + c.sigma_g * c.sigma_g;
    Ok(6.0 * tau.powi(4) / damp * eta * eta * (c.delta * grad_norm_sq + var))
}

/// Right-hand side of the averaged-gradient-norm bound over `c.t` rounds.
pub fn theorem_bound(c: &TheoryConstants, eta: f64) -> Result<f64> {
    let (ceiling, _) = max_stepsize(c)?;
    if !(eta > 0.0) || eta > ceiling * (1.0 + 1e-12) {
        return Err(Error::BoundInapplicable(format!(
            "η = {eta} exceeds the step-size ceiling {ceiling}"
        )));
    }
    if !(c.delta0 >= 0.0) {
        return Err(Error::Domain("Δ₀ must be non-negative".into()));
    }
    Ok(theorem_terms(c, eta)?.iter().sum())
}

/// The three summands of [`theorem_bound`]: optimization, variance, drift.
pub fn theorem_terms(c: &TheoryConstants, eta: f64) -> Result<[f64; 3]> {
    c.validate()?;
    let s = c.s_tau()?;
    let (l, mu, tau, delta) = (c.l, c.mu, c.tau as f64, c.delta);
    let var = c.sigma_l * c.sigma_l + c.sigma_g * c.sigma_g;
    Ok([
        4.0 * c.delta0 / (delta * eta * s * c.t as f64),
        4.0 * eta * s * l * c.sigma_l * c.sigma_l / (delta * c.n as f64),
        48.0 * eta * eta * tau.powi(4) * l * l * var
            / (delta * delta * (1.0 - mu) * (1.0 - mu * mu) * s),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> TheoryConstants {
        TheoryConstants {
            l: 1.0,
            sigma_l: 0.0,
            sigma_g: 0.0,
            mu: 0.0,
            tau: 1,
            delta: 1.0,
            n: 4,
            t: 100,
            delta0: 1.0,
        }
    }

    #[test]
    fn weights_by_hand() {
        let w = momentum_weights(3, 0.0).unwrap();
        assert_eq!(w.alphas, vec![1.0, 1.0, 1.0]);
        assert_eq!(w.s_tau, 3.0);
        let w = momentum_weights(2, 0.5).unwrap();
        assert!((w.alphas[0] - 1.5).abs() < 1e-15);
        assert!((w.alphas[1] - 1.0).abs() < 1e-15);
        assert!((w.s_tau - 2.5).abs() < 1e-15);
        assert!(momentum_weights(2, 1.0).is_err());
        assert!(momentum_weights(0, 0.5).is_err());
    }

    #[test]
    fn ceiling_direct_arithmetic() {
        let (eta, which) = max_stepsize(&consts()).unwrap();
        assert!((eta - 1.0 / 48f64.sqrt()).abs() < 1e-15);
        assert_eq!(which, StepsizeConstraint::Subspace);
        let ceil = stepsize_ceilings(&consts()).unwrap();
        assert!((ceil[0] - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert_eq!(ceil[1], 1.0);
    }

    #[test]
    fn ceiling_homogeneity() {
        let base = consts();
        let (e1, _) = max_stepsize(&base).unwrap();
        let (e2, _) = max_stepsize(&TheoryConstants { l: 2.0, ..base.clone() }).unwrap();
        assert!((e2 - e1 / 2.0).abs() < 1e-15);
        let (e3, w) = max_stepsize(&TheoryConstants { delta: 0.25, ..base }).unwrap();
        assert_eq!(w, StepsizeConstraint::Subspace);
        assert!((e3 - e1 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn corollary_noiseless_limit() {
        let c = consts();
        let terms = corollary_terms(&c).unwrap();
        assert_eq!(terms[3], 0.0);
        assert_eq!(terms[4], 0.0);
        let eta = corollary_stepsize(&c).unwrap();
        assert!((eta - 1.0 / (terms[0] + terms[1] + terms[2])).abs() < 1e-15);
        assert!(eta <= max_stepsize(&c).unwrap().0);
        assert!(corollary_stepsize(&TheoryConstants { delta0: 0.0, ..c }).is_err());
    }

    #[test]
    fn drift_bound_scaling_and_preconditions() {
        let c = TheoryConstants {
            sigma_l: 1.0,
            tau: 2,
            ..consts()
        };
        let eta = 0.01;
        let b1 = drift_bound(&c, eta, 3.0).unwrap();
        let b2 = drift_bound(&TheoryConstants { tau: 4, ..c.clone() }, eta, 3.0).unwrap();
        assert!((b2 / b1 - 16.0).abs() < 1e-12);
        assert!(matches!(drift_bound(&c, 10.0, 1.0), Err(Error::BoundInapplicable(_))));
        assert_eq!(drift_bound(&consts(), 0.1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn theorem_bound_terms() {
        let c = TheoryConstants {
            sigma_l: 1.0,
            ..consts()
        };
        let eta = 0.05;
        let t1 = theorem_terms(&c, eta).unwrap();
        let t2 = theorem_terms(&TheoryConstants { n: 8, ..c.clone() }, eta).unwrap();
        assert!((t2[1] - t1[1] / 2.0).abs() < 1e-15);
        assert_eq!(t1[0], t2[0]);
        assert!(matches!(theorem_bound(&c, 1.0), Err(Error::BoundInapplicable(_))));
    }

    #[test]
    fn drift_requires_trajectory() {
        assert!(matches!(measure_drift(&[], &[0.0]), Err(Error::Instrumentation(_))));
        let d = measure_drift(&[vec![vec![1.0, 0.0], vec![0.9, 0.0]]], &[1.0, 0.0]).unwrap();
        assert!((d - 0.01).abs() < 1e-15);
    }
}

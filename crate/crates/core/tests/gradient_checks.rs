//! Analytic gradients against central differences, plus exact identities
//! of the minibatch and quadratic objectives.

use std::sync::Arc;

use fedslop::data::synthetic_classification;
use fedslop::objectives::{
    lora_base, make_synthetic_federation, BatchSampler, DatasetObjective, Logistic, LoraMlp, Mlp, Model, Objective,
    SyntheticSpec,
};
use fedslop::rng::{Purpose, SeedTree};
use rand::Rng;

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)` over
/// `coords` random coordinates at each of `points` random parameters.
fn worst_relative_error(model: Arc<dyn Model>, width: usize, classes: usize, points: usize, coords: usize) -> f64 {
    let mut rng = SeedTree::new(31).stream(Purpose::Aux, 0, 0);
    let data = Arc::new(synthetic_classification(24, width, classes, 0.3, &mut rng).unwrap());
    let obj = DatasetObjective::full(model.clone(), data).unwrap();
    let d = obj.dim();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for point in 0..points {
        let mut theta = model.init(&mut SeedTree::new(point as u64).stream(Purpose::Init, 0, 0));
        // Move away from zero-initialized factors so every block is exercised.
        theta.iter_mut().for_each(|x| *x += rng.random_range(-0.1..0.1));
        let mut grad = vec![0.0; d];
        obj.loss_grad(&theta, &mut grad).unwrap();
        for _ in 0..coords {
            let j = rng.random_range(0..d);
            let mut up = theta.clone();
            up[j] += h;
            let mut down = theta.clone();
            down[j] -= h;
            let numeric = (obj.loss(&up).unwrap() - obj.loss(&down).unwrap()) / (2.0 * h);
            let scale = grad[j].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grad[j] - numeric).abs() / scale);
        }
    }
    worst
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let err = worst_relative_error(Arc::new(Mlp::new(20, 16, 5)), 20, 5, 5, 64);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn reference_mlp_gradient_matches_finite_differences() {
    let err = worst_relative_error(Arc::new(Mlp::simple_mlp()), 784, 10, 2, 64);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let err = worst_relative_error(Arc::new(Logistic::new(12, 4)), 12, 4, 5, 64);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn lora_gradient_matches_finite_differences() {
    let base = Mlp::new(20, 16, 5);
    let w0 = lora_base(&base, &mut SeedTree::new(3).stream(Purpose::Init, 9, 0));
    let err = worst_relative_error(Arc::new(LoraMlp::new(base, w0, 3)), 20, 5, 5, 64);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn epoch_of_minibatch_gradients_averages_to_the_full_gradient() {
    let mut rng = SeedTree::new(5).stream(Purpose::Aux, 0, 0);
    let data = Arc::new(synthetic_classification(48, 10, 3, 0.3, &mut rng).unwrap());
    let model: Arc<dyn Model> = Arc::new(Mlp::new(10, 8, 3));
    let rows: Vec<usize> = (0..48).filter(|i| i % 3 != 1).collect();
    let obj = DatasetObjective::new(model.clone(), data, rows).unwrap();
    let theta = model.init(&mut SeedTree::new(2).stream(Purpose::Init, 0, 0));
    let d = obj.dim();
    let mut full = vec![0.0; d];
    obj.loss_grad(&theta, &mut full).unwrap();

    // Equal batch sizes make the batch means average to the full mean.
    let n = obj.samples().unwrap();
    let batch = 4;
    assert_eq!(n % batch, 0);
    let mut sampler = BatchSampler::new(n, batch, &mut rng);
    let mut mean = vec![0.0; d];
    let mut g = vec![0.0; d];
    for _ in 0..sampler.batches_per_epoch() {
        obj.stochastic_grad(&theta, &mut sampler, &mut rng, &mut g).unwrap();
        mean.iter_mut().zip(&g).for_each(|(m, x)| *m += x);
    }
    let k = (n / batch) as f64;
    for (m, f) in mean.iter().zip(&full) {
        assert!((m / k - f).abs() < 1e-10);
    }
}

#[test]
fn quadratic_smoothness_constant_is_a_lipschitz_witness() {
    let fed = make_synthetic_federation(&SyntheticSpec {
        clients: 4,
        dim: 16,
        hetero: 1.0,
        noise: 0.0,
        curvature: None,
        seed: 3,
    })
    .unwrap();
    let mut rng = SeedTree::new(6).stream(Purpose::Aux, 0, 0);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let gx = fed.global_grad(&x);
        let gy = fed.global_grad(&y);
        let num: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(num <= fed.smoothness * den * (1.0 + 1e-12));
    }
    // Heterogeneity: ∇F_i − ∇f is constant, so its norm is bounded by σ_G everywhere.
    let theta = vec![0.7; 16];
    let gf = fed.global_grad(&theta);
    for c in &fed.clients {
        let mut gi = vec![0.0; 16];
        c.loss_grad(&theta, &mut gi).unwrap();
        let gap: f64 = gi.iter().zip(&gf).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap <= fed.sigma_g * (1.0 + 1e-12));
    }
}

#[test]
fn quadratic_noise_has_the_stated_variance() {
    let fed = make_synthetic_federation(&SyntheticSpec {
        clients: 1,
        dim: 10,
        hetero: 0.0,
        noise: 2.0,
        curvature: None,
        seed: 1,
    })
    .unwrap();
    let obj = &fed.clients[0];
    let theta = vec![0.5; 10];
    let mut exact = vec![0.0; 10];
    obj.loss_grad(&theta, &mut exact).unwrap();
    let mut rng = SeedTree::new(4).stream(Purpose::Client, 0, 0);
    let mut sampler = BatchSampler::none();
    let mut g = vec![0.0; 10];
    let n = 20_000;
    let mut energy = 0.0;
    for _ in 0..n {
        obj.stochastic_grad(&theta, &mut sampler, &mut rng, &mut g).unwrap();
        energy += g.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    // E‖ξ‖² = σ_L² = 4; the estimator's relative std is about √(2/(d n)).
    let est = energy / n as f64;
    assert!((est - 4.0).abs() < 0.05 * 4.0, "{est}");
}

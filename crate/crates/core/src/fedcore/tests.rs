use super::*;
use crate::error::Error;
use crate::objectives::{make_synthetic_federation, Mlp, Model, Objective, QuadraticObjective, SyntheticFederation, SyntheticSpec};
use crate::rng::{Purpose, SeedTree};
use crate::subspace::sample_stiefel;

fn cfg(method: Method, clients: usize, tau: usize) -> FedConfig {
    FedConfig {
        method,
        clients,
        rounds: 5,
        local_steps: LocalSteps::Fixed(tau),
        stepsize: 0.05,
        momentum: 0.5,
        rank: 4,
        batch: 8,
        projection: ProjectionMode::Flat,
        storage: MomentumStorage::Dense,
        seeds: Seeds {
            master: 11,
            data: 12,
            init: 13,
        },
        record_drift: false,
    }
}

fn synthetic(clients: usize, dim: usize, noise: f64) -> SyntheticFederation {
    make_synthetic_federation(&SyntheticSpec {
        clients,
        dim,
        hetero: 1.0,
        noise,
        curvature: None,
        seed: 5,
    })
    .unwrap()
}

#[test]
fn hand_unrolled_momentum_delta() {
    let obj = QuadraticObjective::new(vec![1.0; 3], vec![0.0; 3], 0.0).unwrap();
    let c = FedConfig {
        stepsize: 0.1,
        momentum: 0.5,
        ..cfg(Method::FedAvgClientMomentum, 1, 2)
    };
    let mut rng = SeedTree::new(0).stream(Purpose::Client, 0, 0);
    let delta = client_update_fedavg_client_momentum(&obj, &[1.0, 0.0, 0.0], &c, &mut rng).unwrap();
    // v₁ = 1, θ₁ = 0.9; v₂ = 0.5 + 0.9 = 1.4, θ₂ = 0.76.
    let mut theta = 1.0f64;
    let mut v = 0.0f64;
    for _ in 0..2 {
        v = 0.5 * v + theta;
        theta -= 0.1 * v;
    }
    assert!((delta[0] + 0.24).abs() < 1e-12);
    assert!((delta[0] - (theta - 1.0)).abs() < 1e-15);
    assert_eq!(&delta[1..], &[0.0, 0.0]);
}

#[test]
fn single_step_is_projected_gradient() {
    let obj = QuadraticObjective::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.5; 5], 0.0).unwrap();
    let c = FedConfig {
        momentum: 0.0,
        rank: 2,
        ..cfg(Method::FedSlop, 1, 1)
    };
    let p = sample_stiefel(5, 2, &mut SeedTree::new(1).stream(Purpose::Basis, 0, 0)).unwrap();
    let theta = [1.0, -1.0, 0.0, 2.0, 0.3];
    let mut g = vec![0.0; 5];
    obj.loss_grad(&theta, &mut g).unwrap();
    let pg = p.project(&g).unwrap();
    let bases = RoundBases::Flat(p);
    let mut rng = SeedTree::new(0).stream(Purpose::Client, 0, 0);
    let delta = client_update_fedslop(&obj, &theta, &bases, &c, &mut rng).unwrap();
    for (d, x) in delta.iter().zip(&pg) {
        assert!((d + 0.05 * x).abs() < 1e-15);
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let obj = QuadraticObjective::new(vec![1.0; 3], vec![0.0; 3], 0.0).unwrap();
    let c = cfg(Method::FedAvgClientMomentum, 1, 1);
    let mut rng = SeedTree::new(0).stream(Purpose::Client, 0, 0);
    let err = client_update_fedavg_client_momentum(&obj, &[0.0; 4], &c, &mut rng).unwrap_err();
    assert!(matches!(err, Error::Shape { expected: 3, got: 4 }));
}

#[test]
fn single_client_round_adds_its_delta() {
    let fed = synthetic(1, 6, 0.3);
    let c = cfg(Method::FedSlop, 1, 3);
    let theta0 = vec![0.2; 6];
    let federation = Federation::new(fed.objectives(), &fed);
    let mut state = ServerState::new(theta0.clone(), c.method);
    let report = server_round(&mut state, &federation, &c, 0, true).unwrap();
    let delta = &report.deltas.unwrap()[0];
    for ((a, b), d) in state.theta.iter().zip(&theta0).zip(delta) {
        assert_eq!(*a, b + d);
    }
}

#[test]
fn stationary_point_is_fixed() {
    let fed = SyntheticFederation::from_centers(vec![1.0, 2.0], vec![vec![0.5, -1.0]; 3], 0.0).unwrap();
    let c = FedConfig {
        rank: 1,
        ..cfg(Method::FedSlop, 3, 4)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let out = run_method(&c, &federation, vec![0.5, -1.0]).unwrap();
    assert_eq!(out.theta, vec![0.5, -1.0]);
    assert!(out.metrics.iter().all(|m| m.grad_norm_sq == 0.0));
}

#[test]
fn replicated_clients_average_to_one_delta() {
    let obj = QuadraticObjective::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4], 0.7).unwrap();
    let c = cfg(Method::FedSlop, 4, 5);
    let p = sample_stiefel(4, 2, &mut SeedTree::new(3).stream(Purpose::Basis, 0, 0)).unwrap();
    let bases = RoundBases::Flat(p);
    let deltas: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut rng = SeedTree::new(9).stream(Purpose::Client, 0, 0);
            client_update_fedslop(&obj, &[0.0; 4], &bases, &c, &mut rng).unwrap()
        })
        .collect();
    let mean = average_deltas(&deltas);
    for (m, d) in mean.iter().zip(&deltas[0]) {
        assert!((m - d).abs() < 1e-12);
    }
}

#[test]
fn order_of_execution_does_not_matter() {
    let fed = synthetic(5, 8, 0.5);
    let c = cfg(Method::FedSlop, 5, 3);
    let mut parallel = Federation::new(fed.objectives(), &fed);
    let a = run_method(&c, &parallel, vec![0.0; 8]).unwrap();
    parallel.schedule = Schedule::Sequential(vec![4, 2, 0, 3, 1]);
    let b = run_method(&c, &parallel, vec![0.0; 8]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dense_and_factored_momentum_agree_flat() {
    let fed = synthetic(3, 10, 0.4);
    let mut c = cfg(Method::FedSlop, 3, 4);
    c.momentum = 0.8;
    let federation = Federation::new(fed.objectives(), &fed);
    let dense = run_method(&c, &federation, vec![0.0; 10]).unwrap();
    c.storage = MomentumStorage::Factored;
    let factored = run_method(&c, &federation, vec![0.0; 10]).unwrap();
    for (a, b) in dense.theta.iter().zip(&factored.theta) {
        assert!((a - b).abs() < 1e-10);
    }
}

fn tiny_mlp_federation(clients: usize) -> (Vec<crate::objectives::DatasetObjective>, std::sync::Arc<dyn crate::objectives::Model>) {
    use std::sync::Arc;
    let mut rng = SeedTree::new(4).stream(Purpose::Problem, 0, 0);
    let data = Arc::new(crate::data::synthetic_classification(60, 6, 3, 0.3, &mut rng).unwrap());
    let model: Arc<dyn crate::objectives::Model> = Arc::new(Mlp::new(6, 5, 3));
    let objs = (0..clients)
        .map(|i| {
            let rows = (0..60).filter(|j| j % clients == i).collect();
            crate::objectives::DatasetObjective::new(model.clone(), data.clone(), rows).unwrap()
        })
        .collect();
    (objs, model)
}

#[test]
fn dense_and_factored_momentum_agree_per_layer() {
    let (objs, model) = tiny_mlp_federation(3);
    let eval = DatasetEvaluator {
        train: objs[0].clone(),
        test: None,
    };
    let clients: Vec<&dyn Objective> = objs.iter().map(|o| o as &dyn Objective).collect();
    let federation = Federation::new(clients, &eval);
    let mut c = cfg(Method::FedSlop, 3, 1);
    c.local_steps = LocalSteps::Epoch;
    c.projection = ProjectionMode::PerLayer;
    c.rank = 2;
    c.momentum = 0.8;
    c.stepsize = 0.2;
    let theta0 = model.init(&mut SeedTree::new(1).stream(Purpose::Init, 0, 0));
    let dense = run_method(&c, &federation, theta0.clone()).unwrap();
    c.storage = MomentumStorage::Factored;
    let factored = run_method(&c, &federation, theta0).unwrap();
    for (a, b) in dense.theta.iter().zip(&factored.theta) {
        assert!((a - b).abs() < 1e-10);
    }
    let layout = model.layout();
    assert_eq!(dense.metrics[0].uplink_per_client, 2 * 6 + 5 + 2 * 5 + 3);
    assert_eq!(uplink_count(&c, layout, 0), 2 * 6 + 5 + 2 * 5 + 3);
}

#[test]
fn flat_deltas_stay_in_the_subspace() {
    let fed = synthetic(4, 12, 0.5);
    let c = FedConfig {
        momentum: 0.9,
        rank: 3,
        ..cfg(Method::FedSlop, 4, 6)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let mut state = ServerState::new(vec![1.0; 12], c.method);
    for t in 0..3 {
        let report = server_round(&mut state, &federation, &c, t, true).unwrap();
        let Some(RoundBases::Flat(p)) = report.bases else { panic!("flat bases expected") };
        for delta in report.deltas.unwrap() {
            let inside = p.project(&delta).unwrap();
            let off: f64 = inside.iter().zip(&delta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(off <= 1e-8 * norm);
        }
    }
}

#[test]
fn noiseless_quadratic_descends() {
    let fed = synthetic(4, 16, 0.0);
    let consts = crate::theory::TheoryConstants {
        l: fed.smoothness,
        sigma_l: 0.0,
        sigma_g: fed.sigma_g,
        mu: 0.5,
        tau: 3,
        delta: 4.0 / 16.0,
        n: 4,
        t: 30,
        delta0: 1.0,
    };
    let (eta, _) = crate::theory::max_stepsize(&consts).unwrap();
    let c = FedConfig {
        rounds: 30,
        stepsize: eta,
        momentum: 0.5,
        rank: 4,
        ..cfg(Method::FedSlop, 4, 3)
    };
    let identical = SyntheticFederation::from_centers(fed.curvature.clone(), vec![fed.minimizer.clone(); 4], 0.0).unwrap();
    let federation = Federation::new(identical.objectives(), &identical);
    let theta0 = vec![2.0; 16];
    let out = run_method(&c, &federation, theta0.clone()).unwrap();
    let mut prev = identical.global_loss(&theta0).unwrap();
    for m in &out.metrics {
        assert!(m.train_loss <= prev + 1e-15);
        prev = m.train_loss;
    }
}

#[test]
fn zero_rounds_is_a_no_op() {
    let fed = synthetic(2, 4, 0.1);
    let c = FedConfig {
        rounds: 0,
        ..cfg(Method::FedSlop, 2, 1)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let out = run_method(&c, &federation, vec![0.3; 4]).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.theta, vec![0.3; 4]);
}

#[test]
fn identical_inputs_identical_series() {
    let fed = synthetic(3, 6, 0.5);
    for method in [Method::FedSlop, Method::FedAvgM, Method::FedSelectLike, Method::FedMefLike, Method::NeuLiteLike] {
        let c = cfg(method, 3, 2);
        let federation = Federation::new(fed.objectives(), &fed);
        let a = run_method(&c, &federation, vec![0.1; 6]).unwrap();
        let b = run_method(&c, &federation, vec![0.1; 6]).unwrap();
        assert_eq!(a, b, "{method}");
    }
}

#[test]
fn server_momentum_accumulates() {
    // One client, one plain step: Δ = −η∇F(θ). Server: v = μv + Δ, θ += v.
    let fed = SyntheticFederation::from_centers(vec![1.0], vec![vec![0.0]], 0.0).unwrap();
    let c = FedConfig {
        stepsize: 0.1,
        momentum: 0.5,
        rounds: 2,
        ..cfg(Method::FedAvgM, 1, 1)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let out = run_method(&c, &federation, vec![1.0]).unwrap();
    let (mut theta, mut v) = (1.0f64, 0.0f64);
    for _ in 0..2 {
        v = 0.5 * v - 0.1 * theta;
        theta += v;
    }
    assert!((out.theta[0] - theta).abs() < 1e-15);
}

#[test]
fn sparse_masks_have_their_sizes() {
    let theta = [0.0, -3.0, 1.0, 3.0, 0.5, -0.5, 2.0, 0.1, 0.0];
    let m = magnitude_mask(&theta, 2);
    assert!(m.contains(1) && m.contains(3));
    assert_eq!(m.kept(), 2);
    let m = magnitude_mask(&theta, 4);
    assert!(m.contains(6) && m.contains(2));
    // Ties at |0.5| go to the lower index.
    let m = magnitude_mask(&theta, 5);
    assert!(m.contains(4) && !m.contains(5));

    let d = 101_770;
    let total: usize = (0..SPARSE_DENOMINATOR).map(|b| block_range(d, b).len()).sum();
    assert_eq!(total, d);
    assert_eq!(block_range(d, 7), block_range(d, 0));
    assert_eq!(sparse_kept(d), 14_539);
}

#[test]
fn sparse_methods_touch_only_kept_coordinates() {
    let fed = synthetic(2, 14, 0.2);
    for method in [Method::FedSelectLike, Method::FedMefLike, Method::NeuLiteLike] {
        let c = cfg(method, 2, 3);
        let federation = Federation::new(fed.objectives(), &fed);
        let theta0: Vec<f64> = (0..14).map(|j| j as f64 / 7.0 - 1.0).collect();
        let mut state = ServerState::new(theta0.clone(), method);
        let report = server_round(&mut state, &federation, &c, 0, true).unwrap();
        let mask = round_mask(&c, &theta0, 0, &mut SeedTree::new(c.seeds.master).stream(Purpose::Server, 0, 0)).unwrap();
        assert_eq!(mask.kept(), report.metrics.uplink_per_client);
        for delta in report.deltas.unwrap() {
            for (j, x) in delta.iter().enumerate() {
                if !mask.contains(j) {
                    assert_eq!(*x, 0.0, "{method} changed coordinate {j}");
                }
            }
        }
    }
}

#[test]
fn uplink_for_the_reference_network() {
    let layout = Mlp::simple_mlp().layout().clone();
    let mut c = cfg(Method::FedSlop, 50, 1);
    c.rank = 112;
    c.projection = ProjectionMode::PerLayer;
    assert_eq!(uplink_count(&c, &layout, 0), 112 * 784 + 128 + 10 * 128 + 10);
    assert_eq!(uplink_count(&c, &layout, 0), 89_226);
    c.method = Method::FedAvgM;
    assert_eq!(uplink_count(&c, &layout, 0), 101_770);
    c.method = Method::FedSlop;
    c.projection = ProjectionMode::Flat;
    c.rank = layout.dim();
    assert_eq!(uplink_count(&c, &layout, 0), layout.dim());
}

#[test]
fn methods_parse_by_name() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!(matches!("fedprox".parse::<Method>(), Err(Error::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let layout = crate::params::Layout::flat(8);
    let base = cfg(Method::FedSlop, 2, 1);
    assert!(base.validate(&layout).is_ok());
    for bad in [
        FedConfig { stepsize: 0.0, ..base.clone() },
        FedConfig { momentum: 1.0, ..base.clone() },
        FedConfig { rank: 9, ..base.clone() },
        FedConfig { rank: 0, ..base.clone() },
        FedConfig { local_steps: LocalSteps::Fixed(0), ..base.clone() },
        FedConfig { clients: 0, ..base.clone() },
    ] {
        assert!(matches!(bad.validate(&layout), Err(Error::Config(_))));
    }
}

#[test]
fn client_errors_carry_the_client_id() {
    let fed = synthetic(3, 4, 0.0);
    let c = FedConfig {
        local_steps: LocalSteps::Epoch,
        ..cfg(Method::FedSlop, 3, 1)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let err = run_method(&c, &federation, vec![0.0; 4]).unwrap_err();
    assert!(matches!(err, Error::Client { .. }), "{err}");
}

#[test]
fn drift_is_recorded_when_asked() {
    let fed = synthetic(2, 4, 0.3);
    let c = FedConfig {
        record_drift: true,
        ..cfg(Method::FedSlop, 2, 3)
    };
    let federation = Federation::new(fed.objectives(), &fed);
    let out = run_method(&c, &federation, vec![0.0; 4]).unwrap();
    assert!(out.metrics.iter().all(|m| m.drift.is_some_and(|d| d > 0.0)));
}

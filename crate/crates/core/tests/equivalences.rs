//! Engines that must produce the same iterates as one another.

mod common;

use std::sync::Arc;

use dhb::engines::{row_to_column_transform, steps, AlgorithmState};
use dhb::*;

use common::*;

#[test]
fn single_agent_abm_is_centralized_heavy_ball() {
    let (suite, _) = quadratic(1, 3, 25.0, 2);
    let one = WeightMatrix::<f64>::new(Mat::identity(1), StochasticKind::DoublyStochastic).unwrap();
    let (alpha, beta) = (0.03, 0.4);
    let x0 = gaussian(1, 3, 5);
    let mut dist = AlgorithmState::bootstrap(&suite, x0.clone()).unwrap();
    let mut cent = AlgorithmState::bootstrap_centralized(&suite, x0.as_slice()).unwrap();
    for _ in 0..100 {
        dist = steps::abm_step(&dist, &one, &one, &[alpha], &[beta], &suite).unwrap();
        cent = steps::centralized_hb_step(&cent, alpha, beta, &suite).unwrap();
        assert!(dist.x.max_abs_diff(&cent.x) <= 1e-15);
    }
}

#[test]
fn zero_momentum_abm_is_ab() {
    let g = directed_graph(7, 1);
    let (a, b) = rs_cs(&g);
    let (suite, _) = quadratic(7, 4, 50.0, 3);
    let alphas = uniform_vec(7, 0.0, 0.02, 4);
    let mut abm = AlgorithmState::bootstrap(&suite, gaussian(7, 4, 6)).unwrap();
    let mut ab = abm.clone();
    for _ in 0..100 {
        abm = steps::abm_step(&abm, &a, &b, &alphas, &[0.0; 7], &suite).unwrap();
        ab = steps::ab_step(&ab, &a, &b, &alphas, &suite).unwrap();
        assert_eq!(abm.x, ab.x);
        assert_eq!(abm.y, ab.y);
    }
}

#[test]
fn ab_with_doubly_stochastic_weights_is_ds_tracking() {
    let g = undirected_graph(8, 2);
    let w = laplacian(&g);
    let (suite, _) = quadratic(8, 3, 20.0, 5);
    let alphas = vec![0.01; 8];
    let mut ab = AlgorithmState::bootstrap(&suite, gaussian(8, 3, 1)).unwrap();
    let mut ds = ab.clone();
    for _ in 0..100 {
        ab = steps::ab_step(&ab, &w, &w, &alphas, &suite).unwrap();
        ds = steps::ds_gradient_tracking_step(&ds, &w, &alphas, &suite).unwrap();
        assert!(ab.x.max_abs_diff(&ds.x) <= 1e-15);
    }
}

#[test]
fn ab_and_its_extra_form_share_trajectories() {
    let g = directed_graph(5, 7);
    let (a, b) = rs_cs(&g);
    let (suite, _) = quadratic(5, 3, 10.0, 8);
    let alpha = 0.02;
    let x0 = gaussian(5, 3, 9);
    let mut ab = AlgorithmState::bootstrap(&suite, x0.clone()).unwrap();
    let mut ex = ab.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        ab = steps::ab_step(&ab, &a, &b, &[alpha; 5], &suite).unwrap();
        ex = steps::ab_extra_form_step(&ex, &a, &b, alpha, &suite).unwrap();
        worst = worst.max(ab.x.max_abs_diff(&ex.x));
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn extra_form_primes_with_one_ab_step() {
    let g = directed_graph(5, 3);
    let (a, b) = rs_cs(&g);
    let (suite, _) = quadratic(5, 2, 10.0, 1);
    let s0 = AlgorithmState::bootstrap(&suite, gaussian(5, 2, 2)).unwrap();
    let ab = steps::ab_step(&s0, &a, &b, &[0.03; 5], &suite).unwrap();
    let ex = steps::ab_extra_form_step(&s0, &a, &b, 0.03, &suite).unwrap();
    assert_eq!(ab.x, ex.x);
}

#[test]
fn extra_form_without_step_is_a_linear_recursion() {
    let g = directed_graph(5, 4);
    let (a, b) = rs_cs(&g);
    let (suite, _) = quadratic(5, 2, 10.0, 1);
    let mut s = AlgorithmState::bootstrap(&suite, gaussian(5, 2, 3)).unwrap();
    s = steps::ab_extra_form_step(&s, &a, &b, 0.0, &suite).unwrap();
    for _ in 0..20 {
        let (x, xp) = (s.x.clone(), s.x_prev.clone());
        s = steps::ab_extra_form_step(&s, &a, &b, 0.0, &suite).unwrap();
        let expected = a.apply(&x).add(&b.apply(&x)).sub(&b.apply(&a.apply(&xp)));
        assert!(s.x.max_abs_diff(&expected) < 1e-15);
    }
}

#[test]
fn scaled_ab_matches_exact_transformed_engine() {
    let g = directed_graph(6, 9);
    let (a, b) = rs_cs(&g);
    let (suite, _) = quadratic(6, 3, 30.0, 10);
    let (b_tilde, scale) = row_to_column_transform(&a).unwrap();
    assert!(b_tilde.stochasticity_residual() <= 1e-12);
    let pi = a.pi_r().unwrap();
    let fixed = b_tilde.entries().mul_vec(pi);
    assert!(fixed.iter().zip(pi).all(|(u, v)| (u - v).abs() < 1e-12));

    let alphas = uniform_vec(6, 0.0, 0.01, 11);
    let x0 = gaussian(6, 3, 12);
    let mut ab = AlgorithmState::bootstrap(&suite, x0.clone()).unwrap();
    let algo = Algorithm::ab_transformed_exact(&a, b.clone()).unwrap();
    let cfg = EngineConfig::new(algo, alphas.clone(), vec![]).unwrap();
    let mut tr = cfg.init_state(&suite, &x0).unwrap();
    assert!(tr.aux.as_ref().unwrap().max_abs_diff(&x0.scale_rows(&scale)) == 0.0);
    for _ in 0..50 {
        ab = steps::ab_step(&ab, &a, &b, &alphas, &suite).unwrap();
        tr = steps::transformed_ab_exact_step(&tr, &b_tilde, &b, &scale, &alphas, &suite).unwrap();
        let dev = ab.x.scale_rows(&scale).max_abs_diff(tr.aux.as_ref().unwrap());
        assert!(dev < 1e-9, "deviation {dev:e}");
    }
}

#[test]
fn doubly_stochastic_transform_is_the_identity_scaling() {
    let w = laplacian(&undirected_graph(6, 1));
    let (b_tilde, scale) = row_to_column_transform(&w).unwrap();
    assert!(scale.iter().all(|s| (s - 1.0).abs() < 1e-12));
    assert!(b_tilde.entries().max_abs_diff(w.entries()) < 1e-12);
}

#[test]
fn add_opt_on_doubly_stochastic_weights_tracks_ds_engine() {
    let w = laplacian(&undirected_graph(7, 3));
    let (suite, _) = quadratic(7, 3, 15.0, 2);
    let x0 = gaussian(7, 3, 4);
    let alphas = vec![0.01; 7];
    let add = EngineConfig::new(Algorithm::add_opt(w.clone(), w.clone()).unwrap(), alphas.clone(), vec![]).unwrap();
    let ds = EngineConfig::new(Algorithm::ds_tracking(w.clone()).unwrap(), alphas, vec![]).unwrap();
    let mut sa = add.init_state(&suite, &x0).unwrap();
    let mut sd = ds.init_state(&suite, &x0).unwrap();
    for _ in 0..200 {
        sa = add.step(&sa, &suite).unwrap();
        sd = ds.step(&sd, &suite).unwrap();
        let w_est = sa.eig.as_ref().unwrap();
        assert!(w_est.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(sa.x.max_abs_diff(&sd.x) < 1e-10);
    }
}

#[test]
fn single_agent_add_opt_is_gradient_descent() {
    let (suite, _) = quadratic(1, 2, 4.0, 6);
    let one = Arc::new(WeightMatrix::<f64>::new(Mat::identity(1), StochasticKind::ColumnStochastic).unwrap());
    let cfg = EngineConfig::new(Algorithm::add_opt(one.clone(), one).unwrap(), vec![0.1], vec![]).unwrap();
    let x0 = gaussian(1, 2, 1);
    let mut s = cfg.init_state(&suite, &x0).unwrap();
    let mut gd = AlgorithmState::bootstrap_centralized(&suite, x0.as_slice()).unwrap();
    for _ in 0..50 {
        s = cfg.step(&s, &suite).unwrap();
        gd = steps::centralized_gd_step(&gd, 0.1, &suite).unwrap();
        assert!(s.x.max_abs_diff(&gd.x) < 1e-14);
    }
}

#[test]
fn extra_single_agent_reduction() {
    let (suite, _) = quadratic(1, 2, 3.0, 2);
    let one = Arc::new(WeightMatrix::<f64>::new(Mat::identity(1), StochasticKind::DoublyStochastic).unwrap());
    let cfg = EngineConfig::new(Algorithm::extra(one, None).unwrap(), vec![0.05], vec![]).unwrap();
    let mut s = cfg.init_state(&suite, &gaussian(1, 2, 3)).unwrap();
    s = cfg.step(&s, &suite).unwrap();
    for _ in 0..20 {
        let (x, xp, g, gp) = (s.x.clone(), s.x_prev.clone(), s.grad.clone(), s.grad_prev.clone());
        s = cfg.step(&s, &suite).unwrap();
        let expected = Mat::from_fn(1, 2, |_, d| 2.0 * x[(0, d)] - xp[(0, d)] - 0.05 * (g[(0, d)] - gp[(0, d)]));
        assert!(s.x.max_abs_diff(&expected) < 1e-15);
    }
}

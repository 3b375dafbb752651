mod common;

use dhb::engines::{lin_space, log_space, run, run_with_state, step_condition_lambda, tune};
use dhb::*;

use common::*;

fn abm(a: &Weights, b: &Weights, alphas: Vec<f64>, betas: Vec<f64>) -> EngineConfig<f64> {
    EngineConfig::new(Algorithm::abm(a.clone(), b.clone()).unwrap(), alphas, betas).unwrap()
}

#[test]
fn abm_on_a_directed_ring_keeps_decreasing() {
    let g = Digraph::directed_ring(4).unwrap();
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(4, 3, 10.0, 1);
    let cfg = abm(&a, &b, vec![1e-2; 4], vec![0.1; 4]);
    let trace = run(&cfg, &suite, &gaussian(4, 3, 2), &x_star, &RunOptions::with_max_iter(2000)).unwrap();
    let r = trace.residuals();
    assert!(r[2000] < r[1000] && r[1000] < r[0]);
    assert!(trace.max_tracking_error().unwrap() < 1e-10);
}

#[test]
fn abm_with_a_silent_agent_converges_linearly() {
    let g = directed_graph(10, 4);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(10, 3, 20.0, 5);
    let mut alphas = uniform_vec(10, 0.002, 0.01, 6);
    alphas[3] = 0.0;
    let cfg = abm(&a, &b, alphas, vec![0.2; 10]);
    let opts = RunOptions { max_iter: 100_000, stop_residual: 1e-10, ..RunOptions::default() };
    let trace = run(&cfg, &suite, &gaussian(10, 3, 7), &x_star, &opts).unwrap();
    assert_eq!(trace.meta.termination, Termination::Converged);
    let fit = fit_linear_rate(&trace.records, 0.5).unwrap();
    assert!(fit.slope < 0.0 && fit.r_squared > 0.99, "{fit:?}");
}

#[test]
fn extra_converges_and_mixes_without_a_step() {
    let w = laplacian(&undirected_graph(8, 2));
    let (suite, x_star) = quadratic(8, 2, 10.0, 3);
    let x0 = gaussian(8, 2, 4);
    let cfg = EngineConfig::new(Algorithm::extra(w.clone(), None).unwrap(), vec![0.02; 8], vec![]).unwrap();
    let opts = RunOptions { max_iter: 50_000, stop_residual: 1e-9, ..RunOptions::default() };
    let trace = run(&cfg, &suite, &x0, &x_star, &opts).unwrap();
    assert_eq!(trace.meta.termination, Termination::Converged);

    // α = 0: pure mixing, every agent converges to the average of x0.
    let mut s = dhb::AlgorithmState::bootstrap(&suite, x0.clone()).unwrap();
    for _ in 0..3000 {
        s = dhb::engines::steps::extra_step(&s, &w, &w_tilde(&w), &[0.0; 8], &suite).unwrap();
    }
    let mean: Vec<f64> = x0.sum_rows().iter().map(|v| v / 8.0).collect();
    assert!(dhb::objectives::residual(&s.x, &mean) < 1e-10);
}

fn w_tilde(w: &WeightMatrix<f64>) -> WeightMatrix<f64> {
    let m = Mat::identity(w.n()).add(w.entries()).scale(0.5);
    WeightMatrix::new(m, StochasticKind::DoublyStochastic).unwrap()
}

#[test]
fn extra_rejects_asymmetric_weights() {
    let g = directed_graph(5, 1);
    let (a, _) = rs_cs(&g);
    assert!(Algorithm::extra(a, None).is_err());
}

#[test]
fn add_opt_and_frost_reach_the_optimum_on_a_directed_graph() {
    let g = directed_graph(5, 2);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(5, 3, 10.0, 4);
    let x0 = gaussian(5, 3, 5);
    let opts = RunOptions { max_iter: 50_000, stop_residual: 1e-6, ..RunOptions::default() };
    let build_add = |al: f64, _| EngineConfig::uniform(Algorithm::add_opt(b.clone(), b.clone())?, al, 0.0);
    let alphas = log_space(1e-3, 0.3, 12);
    let tuned = tune(build_add, &alphas, &[0.0], &suite, &x0, &x_star, 1e-6, &opts, true).unwrap();
    assert!(tuned.best.is_some());

    let build_frost = |al: f64, _| EngineConfig::uniform(Algorithm::frost(a.clone(), a.clone())?, al, 0.0);
    let tuned = tune(build_frost, &alphas, &[0.0], &suite, &x0, &x_star, 1e-6, &opts, true).unwrap();
    assert!(tuned.best.is_some());
}

#[test]
fn frost_on_doubly_stochastic_weights_converges() {
    let w = laplacian(&undirected_graph(6, 5));
    let (suite, x_star) = quadratic(6, 2, 5.0, 2);
    let cfg = EngineConfig::uniform(Algorithm::frost(w.clone(), w.clone()).unwrap(), 1e-3, 0.0).unwrap();
    let opts = RunOptions { max_iter: 100_000, stop_residual: 1e-8, ..RunOptions::default() };
    let (trace, state) = run_with_state(&cfg, &suite, &gaussian(6, 2, 1), &x_star, &opts).unwrap();
    assert_eq!(trace.meta.termination, Termination::Converged);
    let est = state.eig.unwrap();
    assert!((0..6).all(|i| (est[(i, i)] - 1.0 / 6.0).abs() < 1e-6));
}

#[test]
fn centralized_methods_start_from_the_mean() {
    let (suite, x_star) = quadratic(3, 2, 4.0, 1);
    let x0 = gaussian(3, 2, 2);
    let cfg = EngineConfig::new(Algorithm::CentralizedGd, vec![0.1], vec![]).unwrap();
    let s = cfg.init_state(&suite, &x0).unwrap();
    let mean: Vec<f64> = x0.sum_rows().iter().map(|v| v / 3.0).collect();
    assert_eq!(s.x.as_slice(), &mean[..]);
    let trace = run(&cfg, &suite, &x0, &x_star, &RunOptions::with_max_iter(0)).unwrap();
    assert_eq!(trace.len(), 1);
}

#[test]
fn run_records_initial_state_and_stops_at_threshold() {
    let g = directed_graph(6, 3);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(6, 2, 5.0, 9);
    let cfg = abm(&a, &b, vec![0.02; 6], vec![0.3; 6]);
    let x0 = gaussian(6, 2, 1);
    let trace = run(&cfg, &suite, &x0, &x_star, &RunOptions::with_max_iter(0)).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace.records[0].k, 0);
    assert_eq!(trace.records[0].residual, dhb::objectives::residual(&x0, &x_star));

    let opts = RunOptions { max_iter: 100_000, stop_residual: 1e-7, ..RunOptions::default() };
    let trace = run(&cfg, &suite, &x0, &x_star, &opts).unwrap();
    let last = trace.records.last().unwrap();
    assert!(last.residual < 1e-7);
    assert!(trace.records[..trace.len() - 1].iter().all(|r| r.residual >= 1e-7));
    assert_eq!(trace.iterations_to(1e-7), Some(last.k));
    assert!(trace.records.iter().all(|r| r.elapsed_s == 0.0));
}

#[test]
fn runs_are_deterministic() {
    let g = directed_graph(6, 3);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(6, 2, 5.0, 9);
    let cfg = abm(&a, &b, vec![0.02; 6], vec![0.3; 6]);
    let x0 = gaussian(6, 2, 1);
    let t1 = run(&cfg, &suite, &x0, &x_star, &RunOptions::with_max_iter(300)).unwrap();
    let t2 = run(&cfg, &suite, &x0, &x_star, &RunOptions::with_max_iter(300)).unwrap();
    assert_eq!(t1.to_csv_string(), t2.to_csv_string());
}

#[test]
fn oversized_steps_are_flagged_as_divergence() {
    let g = directed_graph(5, 1);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(5, 2, 10.0, 3);
    let cfg = abm(&a, &b, vec![5.0; 5], vec![0.0; 5]);
    let trace = run(&cfg, &suite, &gaussian(5, 2, 2), &x_star, &RunOptions::with_max_iter(10_000)).unwrap();
    assert_eq!(trace.meta.termination, Termination::Diverged);
    assert!(trace.len() < 10_000);
}

#[test]
fn invalid_configurations_are_rejected() {
    let g = directed_graph(4, 1);
    let (a, b) = rs_cs(&g);
    assert!(Algorithm::abm(b.clone(), a.clone()).is_err());
    let algo = Algorithm::abm(a.clone(), b.clone()).unwrap();
    assert!(EngineConfig::new(algo.clone(), vec![0.0; 4], vec![0.0; 4]).is_err());
    assert!(EngineConfig::new(algo.clone(), vec![0.1; 3], vec![0.0; 4]).is_err());
    assert!(EngineConfig::new(algo.clone(), vec![0.1, -0.1, 0.1, 0.1], vec![0.0; 4]).is_err());
    assert!(EngineConfig::new(algo, vec![0.1; 4], vec![0.0; 4]).is_ok());
    let ef = Algorithm::ab_extra_form(a.clone(), b.clone()).unwrap();
    assert!(EngineConfig::new(ef, vec![0.1, 0.2, 0.1, 0.1], vec![]).is_err());
    let (suite, x_star) = quadratic(5, 2, 2.0, 1);
    let cfg = abm(&a, &b, vec![0.1; 4], vec![0.0; 4]);
    assert!(matches!(
        run(&cfg, &suite, &Mat::zeros(5, 2), &x_star, &RunOptions::default()),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn tuning_picks_the_fastest_point_with_deterministic_ties() {
    let g = directed_graph(6, 8);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(6, 3, 30.0, 2);
    let x0 = gaussian(6, 3, 3);
    let build = |al: f64, be: f64| EngineConfig::uniform(Algorithm::abm(a.clone(), b.clone())?, al, be);
    let alphas = log_space(1e-3, 1e-1, 6);
    let betas = lin_space(0.0, 0.8, 5);
    let opts = RunOptions::with_max_iter(20_000);
    let pruned = tune(build, &alphas, &betas, &suite, &x0, &x_star, 1e-8, &opts, true).unwrap();
    let full = tune(build, &alphas, &betas, &suite, &x0, &x_star, 1e-8, &opts, false).unwrap();
    assert_eq!(pruned.best, full.best);
    let best = full.best.unwrap();
    let fastest = full.grid.iter().filter_map(|p| p.iterations).min().unwrap();
    assert_eq!(best.iterations, Some(fastest));
    let first_fastest = full.grid.iter().find(|p| p.iterations == Some(fastest)).unwrap();
    assert_eq!((best.alpha, best.beta), (first_fastest.alpha, first_fastest.beta));
    let again = tune(build, &alphas, &betas, &suite, &x0, &x_star, 1e-8, &opts, true).unwrap();
    assert_eq!(again.grid, pruned.grid);

    // β = 0 is in the grid, so momentum can only help.
    let build_ab = |al: f64, _| EngineConfig::uniform(Algorithm::ab(a.clone(), b.clone())?, al, 0.0);
    let ab = tune(build_ab, &alphas, &[0.0], &suite, &x0, &x_star, 1e-8, &opts, true).unwrap();
    assert!(best.iterations.unwrap() <= ab.best.unwrap().iterations.unwrap());
}

#[test]
fn trace_csv_round_trip() {
    let g = directed_graph(5, 2);
    let (a, b) = rs_cs(&g);
    let (suite, x_star) = quadratic(5, 2, 5.0, 1);
    let mut trace = run(
        &abm(&a, &b, vec![0.02; 5], vec![0.2; 5]),
        &suite,
        &gaussian(5, 2, 1),
        &x_star,
        &RunOptions::with_max_iter(40),
    )
    .unwrap();
    trace.meta.seed = Some(17);
    trace.meta.config_digest = Some("abc123".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.write_csv(&path).unwrap();
    assert_eq!(Trace::<f64>::read_csv(&path).unwrap(), trace);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1), Some("k,residual,tracking_error,elapsed_s"));
}

#[test]
fn step_condition_examples() {
    let n = 4;
    let pi = vec![0.25f64; n];
    let c = step_condition_lambda(&pi, &[0.1; 4], &pi, 1.0, 10.0).unwrap();
    assert!((c.s - 0.1 / 4.0).abs() < 1e-16);
    assert!(c.ok);
    assert!((c.lambda - 0.9).abs() < 1e-15);
    let c = step_condition_lambda(&pi, &[0.0; 4], &pi, 1.0, 10.0).unwrap();
    assert!(!c.ok);
    let c = step_condition_lambda(&pi, &[0.25; 4], &pi, 1.0, 10.0).unwrap();
    assert!(!c.ok);

    let g = directed_graph(7, 3);
    let (a, b) = rs_cs(&g);
    let (pr, pc) = (a.pi_r().unwrap(), b.pi_c().unwrap());
    let l = 5.0;
    let dot: f64 = pr.iter().zip(pc).map(|(x, y)| x * y).sum();
    let alpha = 1.0 / (7.0 * l * dot);
    let c = step_condition_lambda(pr, &[alpha; 7], pc, 1.0, l).unwrap();
    assert!(c.ok && c.lambda < 1.0);
    assert!((c.lambda - (1.0 - 1.0 / l)).abs() < 1e-12);
}

#[test]
fn engine_names_round_trip() {
    for kind in EngineKind::ALL {
        assert_eq!(kind.name().parse::<EngineKind>().unwrap(), kind);
    }
    assert!("nesterov".parse::<EngineKind>().is_err());
}

#![allow(dead_code)]

use std::sync::Arc;

use dhb::graph::generate_nearest_neighbor;
use dhb::{Digraph, Mat, NearestNeighbor, ObjectiveSuite, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Weights = Arc<WeightMatrix<f64>>;

pub fn directed_graph(n: usize, seed: u64) -> Digraph {
    let params = NearestNeighbor { n, ring_degree: 3.min(n - 1), extra_link_fraction: 0.1, seed, directed: true };
    generate_nearest_neighbor(&params).unwrap()
}

pub fn undirected_graph(n: usize, seed: u64) -> Digraph {
    let params = NearestNeighbor { n, ring_degree: 2.min(n - 1), extra_link_fraction: 0.1, seed, directed: false };
    generate_nearest_neighbor(&params).unwrap()
}

/// Uniform row- and column-stochastic weights on `g`.
pub fn rs_cs(g: &Digraph) -> (Weights, Weights) {
    (
        Arc::new(WeightMatrix::uniform_row_stochastic(g).unwrap()),
        Arc::new(WeightMatrix::uniform_column_stochastic(g).unwrap()),
    )
}

pub fn laplacian(g: &Digraph) -> Weights {
    Arc::new(WeightMatrix::laplacian_doubly_stochastic(g).unwrap())
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform_vec(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn quadratic(n: usize, p: usize, q: f64, seed: u64) -> (ObjectiveSuite<f64>, Vec<f64>) {
    let suite = ObjectiveSuite::quadratic_with_condition(n, p, q, seed).unwrap();
    let x_star = suite.global_minimizer(1e-12).unwrap();
    (suite, x_star)
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    a.max_abs_diff(b)
}

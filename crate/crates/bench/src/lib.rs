//! Shared fixtures for the benchmarks.

use entropot_core::{Instance, Problem, TransportPlan};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two random positive histograms on a `side × side` grid with Euclidean ground cost.
pub fn grid_instance(side: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let mut histogram = || {
        let v: Array1<f64> = (0..n).map(|_| 1e-3 + rng.random::<f64>()).collect();
        let total = v.sum();
        v / total
    };
    let (a, b) = (histogram(), histogram());
    let cost = Array2::from_shape_fn((n, n), |(i, j)| {
        let (di, dj) = ((i / side) as f64 - (j / side) as f64, (i % side) as f64 - (j % side) as f64);
        (di * di + dj * dj).sqrt()
    });
    Instance::new(a, b, cost).expect("valid grid instance")
}

/// `grid_instance` with regularization `gamma_rel · ‖C‖∞`.
pub fn grid_problem(side: usize, seed: u64, gamma_rel: f64) -> Problem {
    let instance = grid_instance(side, seed);
    let gamma = gamma_rel * instance.cost_inf_norm();
    Problem::from_instance(instance, gamma).expect("valid problem")
}

/// A nonnegative `n × n` matrix with total mass near one, off both marginals of `instance`.
pub fn perturbed_plan(instance: &Instance, seed: u64) -> TransportPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = Array2::from_shape_fn(instance.cost().dim(), |(i, j)| {
        instance.a()[i] * instance.b()[j] * (0.5 + rng.random::<f64>())
    });
    TransportPlan::new(outer).expect("nonnegative plan")
}

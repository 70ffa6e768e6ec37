//! Convergence runs of the evolution strategy on standard test functions.

use latent_throw::cmaes::{Cmaes, CmaesConfig};

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

/// Best value and generations used.
pub fn run(cfg: &CmaesConfig, f: fn(&[f64]) -> f64) -> (f64, usize) {
    let mut es = Cmaes::new(cfg).unwrap();
    let best = es
        .minimize(cfg.target_value, cfg.max_generations, |xs| {
            Ok(xs.iter().map(|x| f(x)).collect())
        })
        .unwrap()
        .unwrap();
    (best.1, es.generation())
}

pub fn sphere_config(seed: u64) -> CmaesConfig {
    CmaesConfig {
        dimension: 16,
        population: 64,
        initial_mean: vec![0.6; 16],
        initial_sigma: 0.4,
        max_generations: 150,
        target_value: 1e-10,
        rng_seed: seed,
    }
}

pub fn rosenbrock_config(seed: u64) -> CmaesConfig {
    CmaesConfig {
        dimension: 8,
        population: 0,
        initial_mean: vec![0.0; 8],
        initial_sigma: 0.5,
        max_generations: 2000,
        target_value: 1e-6,
        rng_seed: seed,
    }
}

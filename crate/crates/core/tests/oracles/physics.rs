//! Reference computations for the joint integrator and projectile landing,
//! written without the library's formulas.

use latent_throw::sim::{integrate, landing_distance, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest deviation between `steps` exact integrator steps under one
/// constant acceleration and `x0 + v0·t + a·t²/2`.
pub fn constant_acceleration_error(seed: u64, steps: usize, dt: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
    let v0: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
    let (mut x, mut v) = (x0, v0);
    let mut worst = 0.0f64;
    for k in 1..=steps {
        (x, v) = integrate(&x, &v, &a, dt);
        let t = k as f64 * dt;
        for i in 0..3 {
            let exact = x0[i] + v0[i] * t + 0.5 * a[i] * t * t;
            worst = worst.max((x[i] - exact).abs());
        }
    }
    worst
}

/// Landing x from a fine explicit time-stepping of the flight, with the
/// floor crossing located by linear interpolation of the last step.
pub fn numeric_landing(pos: [f64; 2], vel: [f64; 2], cfg: &SimConfig, h: f64) -> f64 {
    let g = cfg.gravity;
    let (mut p, mut v) = (pos, vel);
    loop {
        // Velocity Verlet.
        let next_p = [
            p[0] + v[0] * h + 0.5 * g[0] * h * h,
            p[1] + v[1] * h + 0.5 * g[1] * h * h,
        ];
        let next_v = [v[0] + g[0] * h, v[1] + g[1] * h];
        if next_p[1] <= cfg.floor_y {
            let s = (p[1] - cfg.floor_y) / (p[1] - next_p[1]);
            return p[0] + s * (next_p[0] - p[0]);
        }
        p = next_p;
        v = next_v;
    }
}

/// Largest gap between the closed-form and numeric landing over random
/// releases above the floor.
pub fn landing_error(seed: u64, releases: usize, h: f64) -> f64 {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..releases {
        let pos = [rng.random_range(-0.5..0.9), rng.random_range(0.05..1.3)];
        let vel = [rng.random_range(-1.0..4.0), rng.random_range(-3.0..4.0)];
        let exact = landing_distance(pos, vel, &cfg).unwrap();
        worst = worst.max((exact - numeric_landing(pos, vel, &cfg, h)).abs());
    }
    worst
}

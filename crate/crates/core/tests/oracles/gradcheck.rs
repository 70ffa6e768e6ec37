//! Central finite-difference oracles for network gradients.

use latent_throw::nn::{Activation, Mlp};
use latent_throw::rng;
use ndarray::Array2;
use rand::Rng as _;

pub struct GradErrors {
    pub params: f64,
    pub input: f64,
    pub penalty: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`, worst component.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Random scalar-output net with layers no larger than (8, 16, 16, 1).
pub fn random_net(seed: u64) -> (Mlp, Array2<f64>) {
    let mut r = rng::derive(seed, &[77]);
    let depth = r.random_range(1..=3usize);
    let mut sizes = vec![r.random_range(2..=8usize)];
    for _ in 1..depth {
        sizes.push(r.random_range(2..=16usize));
    }
    sizes.push(1);
    let hidden = if seed % 2 == 0 {
        Activation::LeakyRelu(0.2)
    } else {
        Activation::Tanh
    };
    let output = if seed % 3 == 0 { Activation::Tanh } else { Activation::Linear };
    let mut net = Mlp::init(&sizes, hidden, output, &mut r).unwrap();
    // Nonzero biases so every parameter is exercised.
    for l in net.layers_mut() {
        l.b.mapv_inplace(|_| r.random_range(-0.5..0.5));
    }
    let batch = r.random_range(1..=4usize);
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| r.random_range(-1.0..1.0));
    (net, x)
}

fn weighted_output(net: &Mlp, x: &Array2<f64>, cot: &Array2<f64>) -> f64 {
    (net.forward(x.view()).unwrap() * cot).sum()
}

fn penalty_sum(net: &Mlp, x: &Array2<f64>, penalized: usize) -> f64 {
    let g = net.input_gradient(x.view()).unwrap();
    g.outer_iter()
        .map(|row| {
            let n = row.iter().take(penalized).map(|v| v * v).sum::<f64>().sqrt();
            (n - 1.0) * (n - 1.0)
        })
        .sum()
}

fn fd<F: FnMut(&[f64]) -> f64>(p: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + h;
            let up = f(&q);
            q[i] = p[i] - h;
            let down = f(&q);
            q[i] = p[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn check_net(seed: u64) -> GradErrors {
    let (net, x) = random_net(seed);
    let cot = Array2::from_shape_fn((x.nrows(), 1), |(b, _)| 0.5 + b as f64);
    let cache = net.forward_cached(x.view()).unwrap();
    let (grads, gx) = net.backward(&cache, cot.view()).unwrap();

    let p0 = net.params();
    let mut probe = net.clone();
    let num_params = fd(&p0, 1e-5, |p| {
        probe.set_params(p).unwrap();
        weighted_output(&probe, &x, &cot)
    });
    let x0: Vec<f64> = x.iter().copied().collect();
    let num_input = fd(&x0, 1e-5, |xs| {
        let xs = Array2::from_shape_vec(x.raw_dim(), xs.to_vec()).unwrap();
        weighted_output(&net, &xs, &cot)
    });

    let penalized = (net.input_dim() - 1).max(1);
    let pg = net.gradient_penalty(x.view(), penalized).unwrap();
    let mut probe = net.clone();
    let num_pen = fd(&p0, 1e-4, |p| {
        probe.set_params(p).unwrap();
        penalty_sum(&probe, &x, penalized)
    });

    GradErrors {
        params: max_rel_error(&grads.to_flat(), &num_params, 1e-6),
        input: max_rel_error(&gx.iter().copied().collect::<Vec<_>>(), &num_input, 1e-6),
        penalty: max_rel_error(&pg.grads.to_flat(), &num_pen, 1e-6),
    }
}

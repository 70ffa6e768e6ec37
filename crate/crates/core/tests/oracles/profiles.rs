//! Primitive profiles rebuilt by integrating the jerk pattern as polynomials
//! in absolute time.

/// Polynomial coefficients, lowest degree first.
type Poly = [f64; 4];

fn eval(p: &Poly, t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn derivative(p: &Poly) -> Poly {
    [p[1], 2.0 * p[2], 3.0 * p[3], 0.0]
}

/// Antiderivative of `p`, shifted so it equals `value` at `t0`.
fn integral(p: &Poly, t0: f64, value: f64) -> Poly {
    let mut q = [0.0, p[0], p[1] / 2.0, p[2] / 3.0];
    q[0] = value - eval(&q, t0);
    q
}

/// Piecewise cubic position profile of one primitive.
pub struct Profile {
    bounds: [f64; 5],
    pieces: [Poly; 4],
}

impl Profile {
    /// Unit-step profile: jerk `(+k1, −k1, −k2, +k2)` on the quarters split at
    /// `τ/2`, `τ`, `(τ + T)/2`.
    pub fn normalized_step(tau: f64, t_end: f64) -> Self {
        let k1 = 8.0 / (tau * tau * t_end);
        let k2 = 8.0 / ((t_end - tau).powi(2) * t_end);
        let jerks = [k1, -k1, -k2, k2];
        let bounds = [0.0, tau / 2.0, tau, (tau + t_end) / 2.0, t_end];
        let mut pieces = [[0.0; 4]; 4];
        let (mut acc, mut vel, mut pos) = (0.0, 0.0, 0.0);
        for i in 0..4 {
            let t0 = bounds[i];
            let a = integral(&[jerks[i], 0.0, 0.0, 0.0], t0, acc);
            let v = integral(&a, t0, vel);
            let p = integral(&v, t0, pos);
            let t1 = bounds[i + 1];
            acc = eval(&a, t1);
            vel = eval(&v, t1);
            pos = eval(&p, t1);
            pieces[i] = p;
        }
        Profile { bounds, pieces }
    }

    fn piece(&self, t: f64) -> &Poly {
        let i = (1..4).take_while(|&i| t >= self.bounds[i]).count();
        &self.pieces[i]
    }

    /// `(φ, φ̇, φ̈)` at `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let p = self.piece(t);
        let v = derivative(p);
        [eval(p, t), eval(&v, t), eval(&derivative(&v), t)]
    }
}

pub fn taus(num_primitives: usize, t_end: f64) -> Vec<f64> {
    (0..num_primitives)
        .map(|j| (j + 1) as f64 / (num_primitives + 2) as f64 * t_end)
        .collect()
}

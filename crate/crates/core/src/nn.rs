//! Small fully-connected networks with exact first- and second-order
//! gradients.
//!
//! Batches are row-major: one sample per row. Weights are stored `out × in`
//! so a layer computes `z = a Wᵀ + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::LeakyRelu(s) => z.mapv(|v| if v > 0.0 { v } else { s * v }),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Linear => z.clone(),
        }
    }

    /// σ'(z), with `a = σ(z)` supplied to avoid recomputing tanh.
    fn deriv(self, z: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::LeakyRelu(s) => z.mapv(|v| if v > 0.0 { 1.0 } else { s }),
            Activation::Tanh => a.mapv(|t| 1.0 - t * t),
            Activation::Linear => Array2::ones(z.raw_dim()),
        }
    }

    /// σ''(z); `None` when it vanishes almost everywhere.
    fn second_deriv(self, a: &Array2<f64>) -> Option<Array2<f64>> {
        match self {
            Activation::Tanh => Some(a.mapv(|t| -2.0 * t * (1.0 - t * t))),
            Activation::LeakyRelu(_) | Activation::Linear => None,
        }
    }

    fn encode(self, w: &mut Writer) {
        let (tag, slope) = match self {
            Activation::LeakyRelu(s) => (0, s),
            Activation::Tanh => (1, 0.0),
            Activation::Linear => (2, 0.0),
        };
        w.u8(tag);
        w.f64(slope);
    }

    fn decode(r: &mut Reader) -> Result<Self> {
        let tag = r.u8()?;
        let slope = r.f64()?;
        match tag {
            0 => Ok(Activation::LeakyRelu(slope)),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Linear),
            t => Err(Error::format("network", format!("unknown activation tag {t}"))),
        }
    }
}

/// Weights (`out × in`) and biases of one affine layer. Also used to hold
/// gradients and optimizer moments of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.w.ncols(), l.w.nrows()))
                .collect(),
        }
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, k: f64, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.scaled_add(k, &b.w);
            a.b.scaled_add(k, &b.b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }

    /// Flattened in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `a_0 = x, a_1, …, a_L`.
    acts: Vec<Array2<f64>>,
    /// Pre-activations `z_1, …, z_L`.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds the input")
    }
}

/// Result of [`Mlp::gradient_penalty`].
#[derive(Debug, Clone)]
pub struct PenaltyGrad {
    /// `(‖∇ₓD‖ − 1)²` per sample.
    pub values: Vec<f64>,
    /// Gradient of the summed penalty with respect to the parameters.
    pub grads: Gradients,
    /// Samples whose input gradient vanished; their norm factor is taken as 0.
    pub zero_norm: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            hidden,
            output,
            layers: sizes.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect(),
        })
    }

    /// He-uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for l in &mut net.layers {
            let bound = (6.0 / l.w.ncols() as f64).sqrt();
            l.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in layer order, weights (row-major) before biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(self.num_params(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = a.dot(&l.w.t()) + &l.b;
            a = self.activation(i).apply(&z);
        }
        Ok(a)
    }

    /// Single-sample convenience wrapper around [`Mlp::forward`].
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut acts = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let z = acts[i].dot(&l.w.t()) + &l.b;
            acts.push(self.activation(i).apply(&z));
            pre.push(z);
        }
        Ok(ForwardCache { acts, pre })
    }

    /// Reverse pass for the scalar `Σ ⟨dout, output⟩` over the batch.
    /// Returns parameter gradients and the per-sample input gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dout: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        let out = cache.output();
        if cache.pre.len() != self.layers.len() || dout.dim() != out.dim() {
            return Err(Error::shape(format!("{:?}", out.dim()), format!("{:?}", dout.dim())));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut g = dout.to_owned();
        for i in (0..self.layers.len()).rev() {
            let delta = g * self.activation(i).deriv(&cache.pre[i], &cache.acts[i + 1]);
            grads.layers[i].w = delta.t().dot(&cache.acts[i]);
            grads.layers[i].b = delta.sum_axis(Axis(0));
            g = delta.dot(&self.layers[i].w);
        }
        Ok((grads, g))
    }

    /// Input gradient of a scalar-output network, one row per sample.
    pub fn input_gradient(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.require_scalar()?;
        let cache = self.forward_cached(x)?;
        let ones = Array2::ones((x.nrows(), 1));
        Ok(self.backward(&cache, ones.view())?.1)
    }

    fn require_scalar(&self) -> Result<()> {
        if self.output_dim() != 1 {
            return Err(Error::InvalidConfig(format!(
                "scalar-output network required, got {} outputs",
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Penalty `(‖∇ₓD(x)‖ − 1)²` per sample and the exact parameter gradient
    /// of its batch sum.
    ///
    /// Only the first `penalized` input components enter the norm (the rest
    /// are conditioning inputs). The gradient with respect to the parameters
    /// is `∂/∂θ ⟨v, ∇ₓD⟩` with `v` the penalty's derivative in the input
    /// gradient, i.e. the parameter gradient of the directional derivative of
    /// `D` along `v`. It is computed by a tangent forward pass followed by a
    /// reverse pass through both the primal and tangent computations.
    pub fn gradient_penalty(&self, x: ArrayView2<f64>, penalized: usize) -> Result<PenaltyGrad> {
        self.require_scalar()?;
        if penalized == 0 || penalized > self.input_dim() {
            return Err(Error::shape(format!("1..={}", self.input_dim()), penalized));
        }
        let cache = self.forward_cached(x)?;
        let n_layers = self.layers.len();
        let batch = x.nrows();

        // Input gradient and per-layer σ'.
        let derivs: Vec<Array2<f64>> = (0..n_layers)
            .map(|i| self.activation(i).deriv(&cache.pre[i], &cache.acts[i + 1]))
            .collect();
        let mut g = Array2::<f64>::ones((batch, 1));
        for i in (0..n_layers).rev() {
            g = (g * &derivs[i]).dot(&self.layers[i].w);
        }

        // Tangent direction v = dp/d(∇ₓD).
        let mut values = Vec::with_capacity(batch);
        let mut zero_norm = 0;
        let mut v = Array2::<f64>::zeros(x.raw_dim());
        for (b, row) in g.outer_iter().enumerate() {
            let norm = row.iter().take(penalized).map(|t| t * t).sum::<f64>().sqrt();
            values.push((norm - 1.0) * (norm - 1.0));
            if norm == 0.0 {
                zero_norm += 1;
                continue;
            }
            let k = 2.0 * (norm - 1.0) / norm;
            for c in 0..penalized {
                v[[b, c]] = k * row[c];
            }
        }

        // Tangent forward: ż_l = ȧ_{l−1} W_lᵀ, ȧ_l = σ'(z_l) ż_l.
        let mut dot_a = vec![v];
        let mut dot_z = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let zt = dot_a[i].dot(&self.layers[i].w.t());
            dot_a.push(&zt * &derivs[i]);
            dot_z.push(zt);
        }

        // Reverse over the primal and tangent passes, seeded with ∂s/∂ȧ_L = 1.
        let mut grads = Gradients::zeros_like(self);
        let mut adj_dot_a = Array2::<f64>::ones((batch, 1));
        let mut adj_a: Option<Array2<f64>> = None;
        for i in (0..n_layers).rev() {
            let adj_dot_z = &adj_dot_a * &derivs[i];
            let mut adj_z: Option<Array2<f64>> = adj_a.take().map(|aa| aa * &derivs[i]);
            if let Some(dd) = self.activation(i).second_deriv(&cache.acts[i + 1]) {
                let term = &adj_dot_a * &dd * &dot_z[i];
                adj_z = Some(match adj_z {
                    Some(z) => z + term,
                    None => term,
                });
            }
            let w = &self.layers[i].w;
            let gl = &mut grads.layers[i];
            gl.w = adj_dot_z.t().dot(&dot_a[i]);
            if let Some(az) = &adj_z {
                gl.w += &az.t().dot(&cache.acts[i]);
                gl.b = az.sum_axis(Axis(0));
                adj_a = Some(az.dot(w));
            }
            adj_dot_a = adj_dot_z.dot(w);
        }
        Ok(PenaltyGrad {
            values,
            grads,
            zero_norm,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.sizes.len() as u32);
        for &s in &self.sizes {
            w.u32(s as u32);
        }
        self.hidden.encode(w);
        self.output.encode(w);
        w.f64s(&self.params());
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::format("network", format!("{n} layer sizes")));
        }
        let sizes = (0..n)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let hidden = Activation::decode(r)?;
        let output = Activation::decode(r)?;
        let mut net = Mlp::zeros(&sizes, hidden, output)
            .map_err(|e| Error::format("network", e.to_string()))?;
        let params = r.f64s(net.num_params())?;
        net.set_params(&params)?;
        Ok(net)
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub const EPS: f64 = 1e-8;

    pub fn new(net: &Mlp, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: Self::EPS,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.v
    }

    /// One bias-corrected update of `net` (descent on `grads`).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let shapes_match = net.layers.len() == grads.layers.len()
            && net.layers.iter().zip(&grads.layers).zip(&self.m.layers).all(|((p, g), m)| {
                p.w.dim() == g.w.dim() && p.b.dim() == g.b.dim() && p.w.dim() == m.w.dim()
            });
        if !shapes_match {
            return Err(Error::shape(net.num_params(), grads.to_flat().len()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(update);
            Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(update);
        }
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64s(&[self.lr, self.beta1, self.beta2, self.eps]);
        w.u64(self.step);
        w.f64s(&self.m.to_flat());
        w.f64s(&self.v.to_flat());
    }

    pub(crate) fn decode(r: &mut Reader, net: &Mlp) -> Result<Self> {
        let h = r.f64s(4)?;
        let mut adam = Adam::new(net, h[0], h[1], h[2]);
        adam.eps = h[3];
        adam.step = r.u64()?;
        for moments in [&mut adam.m, &mut adam.v] {
            let flat = r.f64s(net.num_params())?;
            let mut it = flat.into_iter();
            for l in &mut moments.layers {
                l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v = it.next().unwrap());
            }
        }
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    const LEAKY: Activation = Activation::LeakyRelu(0.2);

    #[test]
    fn constant_output_from_bias() {
        let mut net = Mlp::zeros(&[3, 2], LEAKY, Activation::Linear).unwrap();
        net.layers_mut()[0].b = array![0.5, -1.5];
        assert_eq!(net.forward_one(&[4.0, -2.0, 9.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn single_affine_unit() {
        let mut net = Mlp::zeros(&[1, 1], LEAKY, Activation::Linear).unwrap();
        net.layers_mut()[0].w = array![[2.0]];
        net.layers_mut()[0].b = array![1.0];
        assert_eq!(net.forward_one(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let mut r = rng::seeded(1);
        let net = Mlp::init(&[3, 2], LEAKY, Activation::Linear, &mut r).unwrap();
        let x = array![[1.0, -2.0, 0.5]];
        let cot = array![[0.3, -0.7]];
        let cache = net.forward_cached(x.view()).unwrap();
        let (g, gx) = net.backward(&cache, cot.view()).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.layers[0].w[[o, i]], cot[[0, o]] * x[[0, i]]);
            }
        }
        assert_eq!(g.layers[0].b, array![0.3, -0.7]);
        let expect = cot.dot(&net.layers()[0].w);
        assert_eq!(gx, expect);
    }

    #[test]
    fn linear_critic_penalty_closed_form() {
        let mut net = Mlp::zeros(&[3, 1], LEAKY, Activation::Linear).unwrap();
        let a = array![[0.6, -1.2, 2.0]];
        net.layers_mut()[0].w = a.clone();
        net.layers_mut()[0].b = array![0.4];
        let x = array![[0.1, 0.2, 0.3], [-1.0, 5.0, 2.0]];
        let pg = net.gradient_penalty(x.view(), 3).unwrap();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        for &p in &pg.values {
            assert!((p - (norm - 1.0).powi(2)).abs() < 1e-14);
        }
        for i in 0..3 {
            let expect = 2.0 * 2.0 * (norm - 1.0) * a[[0, i]] / norm;
            assert!((pg.grads.layers[0].w[[0, i]] - expect).abs() < 1e-12);
        }
        assert_eq!(pg.grads.layers[0].b[0], 0.0);
    }

    #[test]
    fn unit_gradient_norm_gives_zero_penalty() {
        let mut net = Mlp::zeros(&[2, 1], LEAKY, Activation::Linear).unwrap();
        net.layers_mut()[0].w = array![[0.6, 0.8]];
        let pg = net.gradient_penalty(array![[3.0, -1.0]].view(), 2).unwrap();
        assert!(pg.values[0].abs() < 1e-15);
        assert!(pg.grads.to_flat().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn zero_input_gradient_is_flagged() {
        let net = Mlp::zeros(&[2, 4, 1], LEAKY, Activation::Linear).unwrap();
        let pg = net.gradient_penalty(array![[1.0, 1.0]].view(), 2).unwrap();
        assert_eq!(pg.zero_norm, 1);
        assert_eq!(pg.values[0], 1.0);
        assert!(pg.grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_first_step_and_scalar_oracle() {
        let mut net = Mlp::zeros(&[1, 1], LEAKY, Activation::Linear).unwrap();
        let mut adam = Adam::new(&net, 1e-5, 0.0, 0.5);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].w[[0, 0]] = 1.0;
        g.layers[0].b[0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        assert!((net.layers()[0].w[[0, 0]] + 1e-5).abs() < 1e-12);

        // Scalar re-implementation, two steps of constant gradient.
        let (lr, b1, b2, eps, gv) = (1e-3, 0.9, 0.999, 1e-8, 0.37);
        let mut net = Mlp::zeros(&[1, 1], LEAKY, Activation::Linear).unwrap();
        let mut adam = Adam::new(&net, lr, b1, b2);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].w[[0, 0]] = gv;
        let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            adam.step(&mut net, &g).unwrap();
            m = b1 * m + (1.0 - b1) * gv;
            v = b2 * v + (1.0 - b2) * gv * gv;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
            assert!((net.layers()[0].w[[0, 0]] - p).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut r = rng::seeded(2);
        let mut net = Mlp::init(&[2, 3, 1], LEAKY, Activation::Linear, &mut r).unwrap();
        let mut adam = Adam::new(&net, 0.1, 0.5, 0.5);
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].b[0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        let before = net.clone();
        let m_before = adam.first_moment().layers[1].b[0];
        adam.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net.layers()[0], before.layers()[0]);
        assert_eq!(adam.first_moment().layers[1].b[0], 0.5 * m_before);
    }

    #[test]
    fn he_init_moments_and_determinism() {
        let mk = || Mlp::init(&[256, 256, 1], LEAKY, Activation::Linear, &mut rng::seeded(9)).unwrap();
        let net = mk();
        assert_eq!(net, mk());
        let w = &net.layers()[0].w;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var / (2.0 / 256.0) - 1.0).abs() < 0.2, "variance {var}");
        assert!(net.layers().iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2], LEAKY, Activation::Linear).unwrap();
        assert!(matches!(net.forward_one(&[1.0]), Err(Error::ShapeMismatch { .. })));
        let cache = net.forward_cached(array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert!(net.backward(&cache, array![[1.0]].view()).is_err());
        assert!(net.gradient_penalty(array![[1.0, 2.0, 3.0]].view(), 3).is_err());
    }

    #[test]
    fn encode_roundtrip() {
        let mut r = rng::seeded(4);
        let net = Mlp::init(&[4, 5, 1], Activation::Tanh, Activation::Linear, &mut r).unwrap();
        let mut adam = Adam::new(&net, 1e-3, 0.0, 0.5);
        let mut n2 = net.clone();
        let g = net.gradient_penalty(array![[0.1, 0.2, 0.3, 0.4]].view(), 3).unwrap().grads;
        adam.step(&mut n2, &g).unwrap();
        let mut w = Writer::new();
        n2.encode(&mut w);
        adam.encode(&mut w);
        let bytes = w.finish();
        let mut rd = Reader::new(&bytes, "test");
        let back = Mlp::decode(&mut rd).unwrap();
        let adam_back = Adam::decode(&mut rd, &back).unwrap();
        rd.finish().unwrap();
        assert_eq!(back, n2);
        assert_eq!(adam_back, adam);
    }
}

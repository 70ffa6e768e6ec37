//! Conditional WGAN-GP over throwing motions.
//!
//! The generator maps `[z, c]` to a normalized motion; the critic scores
//! `[x, c]`. Everything inside the networks lives in the normalized space
//! where each feature spans `[−1, 1]`.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Gradients, Mlp};
use crate::primitives::{decode, Motion, PrimitiveBasis, NUM_JOINTS};
use crate::rng::{self, Rng};
use crate::sim::{simulate, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Gradient-penalty weight λ.
    pub penalty_weight: f64,
    pub n_critic: usize,
    pub dim_z: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub checkpoint_every: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 1024,
            learning_rate: 1e-5,
            beta1: 0.0,
            beta2: 0.5,
            penalty_weight: 10.0,
            n_critic: 5,
            dim_z: 16,
            hidden: vec![256, 256],
            leaky_slope: 0.2,
            checkpoint_every: 50,
            rng_seed: 0,
        }
    }

    pub fn desk() -> Self {
        TrainConfig {
            epochs: 800,
            batch_size: 32,
            learning_rate: 1e-4,
            checkpoint_every: 50,
            ..TrainConfig::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train: {m}")));
        if self.batch_size == 0 || self.n_critic == 0 || self.dim_z == 0 {
            return bad("batch_size, n_critic and dim_z must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.penalty_weight >= 0.0) || !(self.learning_rate > 0.0) {
            return bad("penalty_weight must be >= 0 and learning_rate > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Affine maps from physical feature ranges to `[−1, 1]`.
///
/// Features are `θ_init (3)`, the weights row-major by joint, then the
/// condition `p_g` last.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Normalizer {
    pub fn new(meta: &DatasetMeta, num_primitives: usize) -> Result<Self> {
        let mut lo = meta.angle_min.to_vec();
        let mut hi = meta.angle_max.to_vec();
        for _ in 0..NUM_JOINTS * num_primitives {
            lo.push(meta.weight_range[0]);
            hi.push(meta.weight_range[1]);
        }
        lo.push(meta.distance_range[0]);
        hi.push(meta.distance_range[1]);
        Self::from_bounds(lo, hi)
    }

    fn from_bounds(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 2 || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidConfig("normalizer ranges must be non-empty".into()));
        }
        Ok(Normalizer { lo, hi })
    }

    /// Motion features, excluding the condition.
    pub fn motion_dim(&self) -> usize {
        self.lo.len() - 1
    }

    pub fn condition_range(&self) -> [f64; 2] {
        let i = self.motion_dim();
        [self.lo[i], self.hi[i]]
    }

    pub fn normalize(&self, i: usize, v: f64) -> f64 {
        2.0 * (v - self.lo[i]) / (self.hi[i] - self.lo[i]) - 1.0
    }

    pub fn denormalize(&self, i: usize, u: f64) -> f64 {
        self.lo[i] + 0.5 * (u + 1.0) * (self.hi[i] - self.lo[i])
    }

    pub fn normalize_condition(&self, p_g: f64) -> f64 {
        self.normalize(self.motion_dim(), p_g)
    }

    pub fn normalize_motion(&self, m: &Motion) -> Vec<f64> {
        m.to_vec()
            .into_iter()
            .enumerate()
            .map(|(i, v)| self.normalize(i, v))
            .collect()
    }

    pub fn denormalize_motion(&self, u: &[f64]) -> Result<Motion> {
        if u.len() != self.motion_dim() {
            return Err(Error::shape(self.motion_dim(), u.len()));
        }
        let phys: Vec<f64> = u.iter().enumerate().map(|(i, &v)| self.denormalize(i, v)).collect();
        Motion::from_slice(&phys)
    }

    fn encode(&self, w: &mut Writer) {
        w.u32(self.lo.len() as u32);
        w.f64s(&self.lo);
        w.f64s(&self.hi);
    }

    fn decode(r: &mut Reader) -> Result<Self> {
        let n = r.u32()? as usize;
        if n > 1 << 16 {
            return Err(Error::format("checkpoint", "normalizer too large"));
        }
        let lo = r.f64s(n)?;
        let hi = r.f64s(n)?;
        Self::from_bounds(lo, hi).map_err(|e| Error::format("checkpoint", e.to_string()))
    }
}

/// Per-epoch batch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub d_loss: f64,
    /// `None` if no generator step fell in this epoch.
    pub g_loss: Option<f64>,
    /// `E[D(x)] − E[D(G(z))]`, the critic's distance estimate.
    pub wasserstein: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub normalizer: Normalizer,
    pub dim_z: usize,
    pub history: Vec<EpochLosses>,
}

impl GanModel {
    pub fn new(cfg: &TrainConfig, normalizer: Normalizer) -> Result<Self> {
        cfg.validate()?;
        let x_dim = normalizer.motion_dim();
        let hidden = Activation::LeakyRelu(cfg.leaky_slope);
        let mut g_sizes = vec![cfg.dim_z + 1];
        g_sizes.extend(&cfg.hidden);
        g_sizes.push(x_dim);
        let mut d_sizes = vec![x_dim + 1];
        d_sizes.extend(&cfg.hidden);
        d_sizes.push(1);
        let generator = Mlp::init(
            &g_sizes,
            hidden,
            Activation::Tanh,
            &mut rng::derive(cfg.rng_seed, &[rng::TAG_INIT, 0]),
        )?;
        let discriminator = Mlp::init(
            &d_sizes,
            hidden,
            Activation::Linear,
            &mut rng::derive(cfg.rng_seed, &[rng::TAG_INIT, 1]),
        )?;
        Ok(GanModel {
            generator,
            discriminator,
            normalizer,
            dim_z: cfg.dim_z,
            history: Vec::new(),
        })
    }

    pub fn motion_dim(&self) -> usize {
        self.normalizer.motion_dim()
    }

    /// Normalized generator output for rows of `z` and normalized conditions.
    pub fn generate_normalized(&self, z: ArrayView2<f64>, c: &Array1<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.dim_z || c.len() != z.nrows() {
            return Err(Error::shape(
                format!("{} x {}", c.len(), self.dim_z),
                format!("{} x {}", z.nrows(), z.ncols()),
            ));
        }
        let input = concatenate![Axis(1), z, c.view().insert_axis(Axis(1))];
        self.generator.forward(input.view())
    }

    /// Motion for latent `z ∈ [−1, 1]^dim_z` and target distance `p_g`.
    pub fn sample_motion(&self, p_g: f64, z: &[f64]) -> Result<Motion> {
        let [lo, hi] = self.normalizer.condition_range();
        if !(lo..=hi).contains(&p_g) {
            return Err(Error::ConditionOutOfRange(p_g));
        }
        if z.len() != self.dim_z {
            return Err(Error::shape(self.dim_z, z.len()));
        }
        let z = ArrayView2::from_shape((1, z.len()), z).expect("row vector");
        let c = Array1::from_elem(1, self.normalizer.normalize_condition(p_g));
        let out = self.generate_normalized(z, &c)?;
        self.normalizer.denormalize_motion(out.row(0).as_slice().expect("contiguous"))
    }

    /// Motion with `z` drawn uniformly from `[−1, 1]^dim_z`.
    pub fn sample_motion_rng(&self, p_g: f64, rng: &mut Rng) -> Result<Motion> {
        let z: Vec<f64> = (0..self.dim_z).map(|_| rng.random_range(-1.0..1.0)).collect();
        self.sample_motion(p_g, &z)
    }
}

/// Dataset rows mapped into the normalized space.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub x: Array2<f64>,
    pub c: Array1<f64>,
}

impl TrainingData {
    pub fn new(dataset: &Dataset, normalizer: &Normalizer) -> Result<Self> {
        if dataset.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = normalizer.motion_dim();
        let mut x = Array2::zeros((dataset.len(), dim));
        let mut c = Array1::zeros(dataset.len());
        for (i, s) in dataset.samples.iter().enumerate() {
            let row = normalizer.normalize_motion(&s.motion());
            if row.len() != dim {
                return Err(Error::shape(dim, row.len()));
            }
            x.row_mut(i).assign(&Array1::from(row));
            c[i] = normalizer.normalize_condition(s.target_distance);
        }
        Ok(TrainingData { x, c })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// Losses of one critic update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStep {
    pub loss: f64,
    pub wasserstein: f64,
    pub penalty: f64,
}

fn uniform(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn with_condition(x: ArrayView2<f64>, c: &Array1<f64>) -> Array2<f64> {
    concatenate![Axis(1), x, c.view().insert_axis(Axis(1))]
}

/// Model plus optimizer state; owns the whole training process.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: GanModel,
    pub cfg: TrainConfig,
    opt_g: Adam,
    opt_d: Adam,
    epoch: usize,
    d_steps: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, normalizer: Normalizer) -> Result<Self> {
        let model = GanModel::new(&cfg, normalizer)?;
        let opt_g = Adam::new(&model.generator, cfg.learning_rate, cfg.beta1, cfg.beta2);
        let opt_d = Adam::new(&model.discriminator, cfg.learning_rate, cfg.beta1, cfg.beta2);
        Ok(Trainer {
            model,
            cfg,
            opt_g,
            opt_d,
            epoch: 0,
            d_steps: 0,
        })
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One critic update on a real batch:
    /// `L_D = E[D(G(z,c),c)] − E[D(x,c)] + λ E[(‖∇ₓ̂D(x̂,c)‖ − 1)²]`.
    pub fn d_step(&mut self, x: ArrayView2<f64>, c: &Array1<f64>, rng: &mut Rng) -> Result<CriticStep> {
        let b = x.nrows();
        let dim_z = self.model.dim_z;
        let z = uniform(rng, b, dim_z);
        let eps: Vec<f64> = (0..b).map(|_| rng.random_range(0.0..1.0)).collect();
        let fake = self.model.generate_normalized(z.view(), c)?;

        let d = &self.model.discriminator;
        let real_in = with_condition(x, c);
        let fake_in = with_condition(fake.view(), c);
        let both = concatenate![Axis(0), real_in, fake_in];
        let cache = d.forward_cached(both.view())?;
        let scores = cache.output();
        let inv_b = 1.0 / b as f64;
        let real_mean = scores.slice(s![..b, 0]).sum() * inv_b;
        let fake_mean = scores.slice(s![b.., 0]).sum() * inv_b;
        let mut cot = Array2::from_elem((2 * b, 1), inv_b);
        cot.slice_mut(s![..b, ..]).fill(-inv_b);
        let (mut grads, _) = d.backward(&cache, cot.view())?;

        let mut hat = real_in;
        for (i, e) in eps.iter().enumerate() {
            let mut row = hat.row_mut(i);
            row.zip_mut_with(&fake_in.row(i), |r, f| *r = e * *r + (1.0 - e) * f);
        }
        let lambda = self.cfg.penalty_weight;
        let mut penalty = 0.0;
        if lambda > 0.0 {
            let pg = d.gradient_penalty(hat.view(), self.model.motion_dim())?;
            penalty = pg.values.iter().sum::<f64>() * inv_b;
            grads.add_scaled(lambda * inv_b, &pg.grads);
        }
        let loss = fake_mean - real_mean + lambda * penalty;
        self.check(loss, &grads, "critic")?;
        self.opt_d.step(&mut self.model.discriminator, &grads)?;
        self.d_steps += 1;
        Ok(CriticStep {
            loss,
            wasserstein: real_mean - fake_mean,
            penalty,
        })
    }

    /// One generator update, `L_G = −E[D(G(z,c),c)]`, with conditions drawn
    /// uniformly over the normalized range.
    pub fn g_step(&mut self, batch: usize, rng: &mut Rng) -> Result<f64> {
        let dim_z = self.model.dim_z;
        let z = uniform(rng, batch, dim_z);
        let c = Array1::from_shape_simple_fn(batch, || rng.random_range(-1.0..1.0));
        let g_in = concatenate![Axis(1), z, c.view().insert_axis(Axis(1))];
        let g_cache = self.model.generator.forward_cached(g_in.view())?;
        let d_in = with_condition(g_cache.output().view(), &c);
        let d = &self.model.discriminator;
        let d_cache = d.forward_cached(d_in.view())?;
        let inv_b = 1.0 / batch as f64;
        let loss = -d_cache.output().sum() * inv_b;
        let cot = Array2::from_elem((batch, 1), -inv_b);
        let (_, dx) = d.backward(&d_cache, cot.view())?;
        let dx = dx.slice(s![.., ..self.model.motion_dim()]).to_owned();
        let (grads, _) = self.model.generator.backward(&g_cache, dx.view())?;
        self.check(loss, &grads, "generator")?;
        self.opt_g.step(&mut self.model.generator, &grads)?;
        Ok(loss)
    }

    fn check(&self, loss: f64, grads: &Gradients, which: &str) -> Result<()> {
        if loss.is_finite() && grads.is_finite() {
            return Ok(());
        }
        Err(Error::NonFiniteLoss {
            epoch: self.epoch,
            detail: format!("{which} loss {loss} after {} critic steps", self.d_steps),
        })
    }

    /// Shuffled pass over the data: a critic step per minibatch and a
    /// generator step after every `n_critic` critic steps.
    pub fn run_epoch(&mut self, data: &TrainingData) -> Result<EpochLosses> {
        let batch = self.cfg.batch_size;
        if data.len() < batch {
            return Err(Error::InvalidConfig(format!(
                "batch size {batch} exceeds dataset size {}",
                data.len()
            )));
        }
        let mut rng = rng::derive(self.cfg.rng_seed, &[rng::TAG_EPOCH, self.epoch as u64]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (mut d_sum, mut w_sum, mut p_sum, mut g_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut d_count, mut g_count) = (0usize, 0usize);
        for idx in order.chunks_exact(batch) {
            let x = data.x.select(Axis(0), idx);
            let c = data.c.select(Axis(0), idx);
            let step = self.d_step(x.view(), &c, &mut rng)?;
            d_sum += step.loss;
            w_sum += step.wasserstein;
            p_sum += step.penalty;
            d_count += 1;
            if self.d_steps % self.cfg.n_critic as u64 == 0 {
                g_sum += self.g_step(batch, &mut rng)?;
                g_count += 1;
            }
        }
        let n = d_count as f64;
        let losses = EpochLosses {
            epoch: self.epoch,
            d_loss: d_sum / n,
            g_loss: (g_count > 0).then(|| g_sum / g_count as f64),
            wasserstein: w_sum / n,
            penalty: p_sum / n,
        };
        self.model.history.push(losses);
        self.epoch += 1;
        Ok(losses)
    }

    /// Runs epochs up to `cfg.epochs`, calling `on_epoch` after each.
    pub fn train(
        &mut self,
        data: &TrainingData,
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        if data.x.ncols() != self.model.motion_dim() {
            return Err(Error::shape(self.model.motion_dim(), data.x.ncols()));
        }
        while self.epoch < self.cfg.epochs {
            self.run_epoch(data)?;
            on_epoch(self)?;
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 4] = b"LTGC";
    const VERSION: u32 = 1;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(Self::MAGIC);
        w.u32(Self::VERSION);
        let cfg = serde_json::to_vec(&self.cfg).expect("config serializes");
        w.u64(cfg.len() as u64);
        w.bytes(&cfg);
        w.u64(self.epoch as u64);
        w.u64(self.d_steps);
        w.u32(self.model.dim_z as u32);
        self.model.normalizer.encode(&mut w);
        self.model.generator.encode(&mut w);
        self.model.discriminator.encode(&mut w);
        self.opt_g.encode(&mut w);
        self.opt_d.encode(&mut w);
        w.u64(self.model.history.len() as u64);
        for h in &self.model.history {
            w.u64(h.epoch as u64);
            w.f64s(&[h.d_loss, h.g_loss.unwrap_or(f64::NAN), h.wasserstein, h.penalty]);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.expect_magic(Self::MAGIC)?;
        let version = r.u32()?;
        if version != Self::VERSION {
            return Err(Error::CheckpointMismatch(format!("unsupported version {version}")));
        }
        let cfg_len = r.u64()? as usize;
        let cfg: TrainConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let epoch = r.u64()? as usize;
        let d_steps = r.u64()?;
        let dim_z = r.u32()? as usize;
        let normalizer = Normalizer::decode(&mut r)?;
        let generator = Mlp::decode(&mut r)?;
        let discriminator = Mlp::decode(&mut r)?;
        let x_dim = normalizer.motion_dim();
        if dim_z != cfg.dim_z
            || generator.input_dim() != dim_z + 1
            || generator.output_dim() != x_dim
            || discriminator.input_dim() != x_dim + 1
            || discriminator.output_dim() != 1
        {
            return Err(Error::CheckpointMismatch(format!(
                "generator {:?} / critic {:?} do not fit dim_z {dim_z} and {x_dim} features",
                generator.sizes(),
                discriminator.sizes()
            )));
        }
        let opt_g = Adam::decode(&mut r, &generator)?;
        let opt_d = Adam::decode(&mut r, &discriminator)?;
        let n = r.u64()? as usize;
        if n.saturating_mul(40) > r.remaining() {
            return Err(Error::format("checkpoint", "history length exceeds payload"));
        }
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            let epoch = r.u64()? as usize;
            let v = r.f64s(4)?;
            history.push(EpochLosses {
                epoch,
                d_loss: v[0],
                g_loss: (!v[1].is_nan()).then_some(v[1]),
                wasserstein: v[2],
                penalty: v[3],
            });
        }
        r.finish()?;
        Ok(Trainer {
            model: GanModel {
                generator,
                discriminator,
                normalizer,
                dim_z,
                history,
            },
            cfg,
            opt_g,
            opt_d,
            epoch,
            d_steps,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Per-epoch loss table.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,d_loss,g_loss,wasserstein,penalty\n");
        for h in &self.model.history {
            let g = h.g_loss.map(|g| format!("{g:.8e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.8e},{},{:.8e},{:.8e}\n",
                h.epoch, h.d_loss, g, h.wasserstein, h.penalty
            ));
        }
        out
    }
}

/// Landing accuracy of generated motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub samples: usize,
    /// Never released, or released below the floor.
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_abs_error: f64,
    pub mean_rel_error: f64,
    pub median_rel_error: f64,
    pub p90_rel_error: f64,
    /// Landed motions that also break a joint limit.
    pub limit_violations: usize,
    /// `(p_g, landing)` per sample; landing is `None` on failure.
    pub pairs: Vec<(f64, Option<f64>)>,
}

impl AccuracyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,landing\n");
        for (t, l) in &self.pairs {
            let l = l.map(|l| format!("{l:.8e}")).unwrap_or_default();
            out.push_str(&format!("{t:.8e},{l}\n"));
        }
        out
    }
}

/// Rolls out `n` motions with `p_g` and `z` drawn uniformly.
pub fn eval_accuracy(
    model: &GanModel,
    sim: &SimConfig,
    basis: &PrimitiveBasis,
    n: usize,
    rng: &mut Rng,
) -> Result<AccuracyReport> {
    let [lo, hi] = model.normalizer.condition_range();
    let draws: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|_| {
            let p_g = rng.random_range(lo..=hi);
            let z = (0..model.dim_z).map(|_| rng.random_range(-1.0..1.0)).collect();
            (p_g, z)
        })
        .collect();
    let outcomes: Vec<Result<(f64, Option<f64>, bool)>> = draws
        .par_iter()
        .map(|(p_g, z)| {
            let motion = model.sample_motion(*p_g, z)?;
            let series = decode(&motion, basis)?;
            match simulate(&series, sim) {
                Ok(o) => Ok((*p_g, o.landing_x, o.within_limits())),
                Err(Error::NonFiniteState { .. }) => Ok((*p_g, None, false)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut pairs = Vec::with_capacity(n);
    let mut rel = Vec::new();
    let mut abs_sum = 0.0;
    let mut limit_violations = 0;
    for o in outcomes {
        let (p_g, landing, ok) = o?;
        if let Some(l) = landing {
            abs_sum += (l - p_g).abs();
            rel.push((l - p_g).abs() / p_g);
            if !ok {
                limit_violations += 1;
            }
        }
        pairs.push((p_g, landing));
    }
    let landed = rel.len();
    let failures = n - landed;
    let mean_rel = if landed > 0 { rel.iter().sum::<f64>() / landed as f64 } else { f64::NAN };
    rel.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        if rel.is_empty() {
            f64::NAN
        } else {
            rel[((q * (rel.len() - 1) as f64).round() as usize).min(rel.len() - 1)]
        }
    };
    Ok(AccuracyReport {
        samples: n,
        failures,
        failure_rate: if n > 0 { failures as f64 / n as f64 } else { 0.0 },
        mean_abs_error: if landed > 0 { abs_sum / landed as f64 } else { f64::NAN },
        mean_rel_error: mean_rel,
        median_rel_error: quantile(0.5),
        p90_rel_error: quantile(0.9),
        limit_violations,
        pairs,
    })
}

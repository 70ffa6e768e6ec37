//! CMA-ES with cumulative step-size adaptation, rank-one and rank-μ
//! covariance updates, and an ask/tell interface. Minimizes.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const EIGEN_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesConfig {
    pub dimension: usize,
    /// 0 selects `4 + ⌊3 ln n⌋`.
    pub population: usize,
    /// Empty selects the origin.
    pub initial_mean: Vec<f64>,
    pub initial_sigma: f64,
    pub max_generations: usize,
    /// Stop once the best value is at or below this.
    pub target_value: f64,
    pub rng_seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            dimension: 16,
            population: 64,
            initial_mean: Vec::new(),
            initial_sigma: 0.4,
            max_generations: 100,
            target_value: 0.0,
            rng_seed: 0,
        }
    }
}

impl CmaesConfig {
    pub fn population_size(&self) -> usize {
        if self.population == 0 {
            default_population(self.dimension)
        } else {
            self.population
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("cmaes: {m}")));
        if self.dimension == 0 {
            return bad("dimension must be positive".into());
        }
        if self.population_size() < 2 {
            return bad("population must be at least 2".into());
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return bad(format!("initial_sigma {} must be positive", self.initial_sigma));
        }
        if !self.initial_mean.is_empty() && self.initial_mean.len() != self.dimension {
            return bad(format!(
                "initial_mean has {} entries for dimension {}",
                self.initial_mean.len(),
                self.dimension
            ));
        }
        Ok(())
    }
}

pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

/// Strategy parameters derived from the dimension and population size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyParams {
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// `E‖N(0, I)‖`.
    pub chi_n: f64,
}

pub fn recommended_params(n: usize, lambda: usize) -> StrategyParams {
    let nf = n as f64;
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
    StrategyParams {
        mu,
        weights,
        mu_eff,
        c_sigma,
        d_sigma,
        c_c,
        c_1,
        c_mu,
        chi_n,
    }
}

/// Componentwise `tanh`, mapping candidates into `(−1, 1)^n`.
pub fn squash(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.tanh()).collect()
}

/// One line of the optional per-generation trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_value: f64,
    pub sigma: f64,
    pub mean_norm: f64,
    pub condition: f64,
}

pub const TRACE_HEADER: &str = "generation,best_value,sigma,mean_norm,condition";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e}",
            self.generation, self.best_value, self.sigma, self.mean_norm, self.condition
        )
    }
}

#[derive(Debug, Clone)]
pub struct Cmaes {
    params: StrategyParams,
    lambda: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    /// Eigenvectors of `cov` (columns).
    b: DMatrix<f64>,
    /// Square roots of the eigenvalues.
    d: DVector<f64>,
    inv_sqrt_cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    eigen_generation: usize,
    eigen_interval: usize,
    floored_eigenvalues: usize,
    degenerate: Option<f64>,
    rng: Rng,
    best: Option<(Vec<f64>, f64)>,
}

impl Cmaes {
    pub fn new(cfg: &CmaesConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.dimension;
        let lambda = cfg.population_size();
        let params = recommended_params(n, lambda);
        let eigen_interval =
            ((1.0 / (10.0 * n as f64 * (params.c_1 + params.c_mu))).floor() as usize).max(1);
        let mean = if cfg.initial_mean.is_empty() {
            DVector::zeros(n)
        } else {
            DVector::from_column_slice(&cfg.initial_mean)
        };
        Ok(Cmaes {
            params,
            lambda,
            mean,
            sigma: cfg.initial_sigma,
            cov: DMatrix::identity(n, n),
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
            inv_sqrt_cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            eigen_generation: 0,
            eigen_interval,
            floored_eigenvalues: 0,
            degenerate: None,
            rng: rng::derive(cfg.rng_seed, &[rng::TAG_SEARCH]),
            best: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Completed tell calls.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn eigen_interval(&self) -> usize {
        self.eigen_interval
    }

    /// Eigenvalues raised to the floor so far.
    pub fn floored_eigenvalues(&self) -> usize {
        self.floored_eigenvalues
    }

    /// Best candidate and value seen by `tell`.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    /// Ratio of the largest to smallest eigenvalue of the covariance.
    pub fn condition_number(&self) -> f64 {
        let d2 = self.d.map(|v| v * v);
        d2.max() / d2.min()
    }

    /// `λ` candidates `m + σ B D u` with `u ~ N(0, I)`.
    pub fn ask(&mut self) -> Result<Vec<Vec<f64>>> {
        if let Some(e) = self.degenerate {
            return Err(Error::DegenerateCovariance(e));
        }
        let n = self.dimension();
        Ok((0..self.lambda)
            .map(|_| {
                let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
                let y = &self.b * self.d.component_mul(&u);
                (&self.mean + self.sigma * y).as_slice().to_vec()
            })
            .collect())
    }

    /// Ranks candidates by value (ties by index) and updates the
    /// distribution.
    pub fn tell(&mut self, candidates: &[Vec<f64>], values: &[f64]) -> Result<()> {
        let n = self.dimension();
        if candidates.len() != self.lambda || values.len() != self.lambda {
            return Err(Error::shape(
                self.lambda,
                format!("{} candidates, {} values", candidates.len(), values.len()),
            ));
        }
        if let Some(c) = candidates.iter().find(|c| c.len() != n) {
            return Err(Error::shape(n, c.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite objective value {v}")));
        }
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let top = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| values[top] < *f) {
            self.best = Some((candidates[top].clone(), values[top]));
        }

        let p = &self.params;
        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = order[..p.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + self.sigma * &y_w;

        let cs = p.c_sigma;
        self.p_sigma = (1.0 - cs) * &self.p_sigma
            + (cs * (2.0 - cs) * p.mu_eff).sqrt() * (&self.inv_sqrt_cov * &y_w);
        let g = (self.generation + 1) as i32;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * g)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let cc = p.c_c;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = (1.0 - cc) * &self.p_c + h * (cc * (2.0 - cc) * p.mu_eff).sqrt() * &y_w;
        let delta = (1.0 - h) * cc * (2.0 - cc);

        let weight_sum: f64 = p.weights.iter().sum();
        let mut cov = (1.0 - p.c_1 - p.c_mu * weight_sum) * &self.cov;
        cov += p.c_1 * (&self.p_c * self.p_c.transpose() + delta * &self.cov);
        for (w, y) in p.weights.iter().zip(&ys) {
            cov.ger(p.c_mu * w, y, y, 1.0);
        }
        self.cov = cov;
        self.sigma *= ((cs / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        self.generation += 1;

        if self.generation - self.eigen_generation >= self.eigen_interval {
            self.update_eigensystem();
        }
        Ok(())
    }

    fn update_eigensystem(&mut self) {
        self.eigen_generation = self.generation;
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let mut vals = eig.eigenvalues;
        if vals.iter().any(|v| !v.is_finite()) {
            self.degenerate = Some(f64::NAN);
            return;
        }
        for v in vals.iter_mut() {
            if *v < EIGEN_FLOOR {
                *v = EIGEN_FLOOR;
                self.floored_eigenvalues += 1;
            }
        }
        self.b = eig.eigenvectors;
        self.d = vals.map(f64::sqrt);
        let inv_d = DMatrix::from_diagonal(&self.d.map(|v| 1.0 / v));
        self.inv_sqrt_cov = &self.b * inv_d * self.b.transpose();
        self.cov = sym;
        if !(self.sigma * self.d.max()).is_normal() {
            self.degenerate = Some(vals.min());
        }
    }

    pub fn trace_row(&self) -> TraceRow {
        TraceRow {
            generation: self.generation,
            best_value: self.best.as_ref().map_or(f64::INFINITY, |b| b.1),
            sigma: self.sigma,
            mean_norm: self.mean.norm(),
            condition: self.condition_number(),
        }
    }

    /// Ask/tell loop until the best value reaches `target` or
    /// `max_generations` have run. `eval` scores a whole generation.
    pub fn minimize(
        &mut self,
        target: f64,
        max_generations: usize,
        mut eval: impl FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
    ) -> Result<Option<(Vec<f64>, f64)>> {
        while self.generation < max_generations {
            let xs = self.ask()?;
            let fs = eval(&xs)?;
            self.tell(&xs, &fs)?;
            if self.best.as_ref().is_some_and(|b| b.1 <= target) {
                break;
            }
        }
        Ok(self.best.clone())
    }
}

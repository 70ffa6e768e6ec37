//! One configuration document for a whole experiment.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cmaes::CmaesConfig;
use crate::dataset::GenConfig;
use crate::error::{Error, Result};
use crate::planner::{Objective, PenaltyConfig};
use crate::primitives::PrimitiveConfig;
use crate::sim::SimConfig;
use crate::wgan::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Target landing distance, meters.
    pub target: f64,
    pub objective: Objective,
    pub penalty: PenaltyConfig,
    /// Generation budget of the direct action-space search.
    pub direct_max_generations: usize,
    /// Motions rolled out by `eval`.
    pub eval_samples: usize,
    /// Seconds between rendered frames.
    pub frame_interval: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            target: 1.0,
            objective: Objective::L1,
            penalty: PenaltyConfig::default(),
            direct_max_generations: 150,
            eval_samples: 1000,
            frame_interval: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub primitives: PrimitiveConfig,
    pub dataset: GenConfig,
    pub train: TrainConfig,
    /// Latent search settings; the dimension follows the model.
    pub cmaes: CmaesConfig,
    pub planner: PlannerConfig,
    pub rng_seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk()
    }
}

impl ExperimentConfig {
    /// Reduced budgets that run on one desktop core.
    pub fn desk() -> Self {
        ExperimentConfig {
            sim: SimConfig::default(),
            primitives: PrimitiveConfig::default(),
            dataset: GenConfig::default(),
            train: TrainConfig::desk(),
            cmaes: CmaesConfig {
                dimension: TrainConfig::desk().dim_z,
                population: 64,
                initial_mean: Vec::new(),
                initial_sigma: 0.4,
                max_generations: 50,
                target_value: 0.0,
                rng_seed: 0,
            },
            planner: PlannerConfig::default(),
            rng_seed: 0,
            output_dir: "out".into(),
        }
    }

    /// Full-scale settings.
    pub fn paper() -> Self {
        let mut cfg = ExperimentConfig::desk();
        cfg.dataset.target_count = 282_500;
        cfg.dataset.min_per_bin = 282_500usize.div_ceil(cfg.dataset.num_bins());
        cfg.dataset.max_candidates = 0;
        cfg.train = TrainConfig::paper();
        cfg.cmaes.max_generations = 200;
        cfg.planner.direct_max_generations = 200;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }

    /// Reads a config over the desk preset.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::desk().overlay_json(text)
    }

    /// Returns `self` with the keys present in `text` replaced, section by
    /// section, so a partial file keeps this config's values elsewhere.
    pub fn overlay_json(&self, text: &str) -> Result<Self> {
        let invalid = |e: serde_json::Error| Error::InvalidConfig(e.to_string());
        let patch: Value = serde_json::from_str(text).map_err(invalid)?;
        let mut base = serde_json::to_value(self).map_err(invalid)?;
        merge(&mut base, patch);
        serde_json::from_value(base).map_err(invalid)
    }

    /// Uses `seed` for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.dataset.rng_seed = seed;
        self.train.rng_seed = seed;
        self.cmaes.rng_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        self.planner.penalty.validate()?;
        if self.primitives.num_primitives == 0 || !(self.primitives.duration > 0.0) {
            return Err(Error::InvalidConfig("primitives: need J > 0 and T > 0".into()));
        }
        let [lo, hi] = self.dataset.distance_range;
        if !(lo..=hi).contains(&self.planner.target) {
            return Err(Error::InvalidConfig(format!(
                "planner target {} m is outside the dataset range [{lo}, {hi}]",
                self.planner.target
            )));
        }
        if !(self.planner.frame_interval > 0.0) {
            return Err(Error::InvalidConfig("planner.frame_interval must be positive".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::paper()] {
            cfg.validate().unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
        }
        let p = ExperimentConfig::paper();
        assert_eq!(p.dataset.target_count, 282_500);
        assert_eq!((p.train.epochs, p.train.batch_size), (1000, 1024));
        assert_eq!((p.train.learning_rate, p.train.beta1, p.train.beta2), (1e-5, 0.0, 0.5));
        assert_eq!(p.train.penalty_weight, 10.0);
        assert_eq!((p.cmaes.population, p.cmaes.initial_sigma), (64, 0.4));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sim": {"dt": 0.01, "gravitee": 1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"colour": 1}"#).is_err());
        let partial = ExperimentConfig::from_json(r#"{"planner": {"target": 1.2}}"#).unwrap();
        assert_eq!(partial.planner.target, 1.2);
        assert_eq!(partial.sim, SimConfig::default());
    }

    #[test]
    fn partial_sections_keep_the_preset_values() {
        let desk = ExperimentConfig::from_json(r#"{"train": {"batch_size": 8}}"#).unwrap();
        assert_eq!(desk.train.batch_size, 8);
        assert_eq!(desk.train.epochs, TrainConfig::desk().epochs);
        let paper = ExperimentConfig::paper().overlay_json(r#"{"train": {"batch_size": 8}}"#).unwrap();
        assert_eq!(paper.train.epochs, 1000);
        assert_eq!(paper.dataset.target_count, 282_500);
        assert!(ExperimentConfig::desk().overlay_json(r#"{"train": {"batch": 8}}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut cfg = ExperimentConfig::desk();
        cfg.set_seed(42);
        assert_eq!(
            [cfg.dataset.rng_seed, cfg.train.rng_seed, cfg.cmaes.rng_seed],
            [42, 42, 42]
        );
    }
}

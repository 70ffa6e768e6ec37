//! Constrained throw planning: hinge-penalty objectives, search in the
//! generator's latent space, and direct search over the 33-dim action.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmaes::{squash, Cmaes, CmaesConfig, TraceRow};
use crate::error::{Error, Result};
use crate::primitives::{decode, Motion, PrimitiveBasis, NUM_JOINTS};
use crate::sim::{rollout, SimConfig, ThrowOutcome, Trajectory};
use crate::wgan::{GanModel, Normalizer};

/// Value assigned to candidates whose rollout blows up.
const NON_FINITE_PENALTY: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Radians.
    pub angle_min: [f64; NUM_JOINTS],
    pub angle_max: [f64; NUM_JOINTS],
    /// Radians per second.
    pub velocity_min: [f64; NUM_JOINTS],
    pub velocity_max: [f64; NUM_JOINTS],
    /// Minimum height above the floor for every arm point, meters.
    pub floor_clearance: f64,
    /// Lowest allowed x relative to the base, meters.
    pub behind_limit: f64,
    /// Highest allowed x relative to the base, meters.
    pub front_limit: f64,
    pub angle_weight: f64,
    /// Dead zone of the landing term of the direct objective, meters.
    pub distance_tolerance: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        let limits = crate::sim::JointLimits::throwing_arm();
        PenaltyConfig {
            angle_min: limits.angle_min,
            angle_max: limits.angle_max,
            velocity_min: [-1.5, -1.5, -1.3],
            velocity_max: [1.5, 1.5, 1.3],
            floor_clearance: 0.2,
            behind_limit: -0.1,
            front_limit: 0.5,
            angle_weight: 10.0,
            distance_tolerance: 0.1,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = (0..NUM_JOINTS).all(|i| {
            self.angle_min[i] < self.angle_max[i] && self.velocity_min[i] < self.velocity_max[i]
        });
        if !ordered || !(self.behind_limit < self.front_limit) || !(self.distance_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("penalty limits must be well ordered".into()));
        }
        Ok(())
    }
}

/// `max(lo − v, 0) + max(v − hi, 0)`.
pub fn hinge(value: f64, lo: f64, hi: f64) -> f64 {
    (lo - value).max(0.0) + (value - hi).max(0.0)
}

/// Which workspace limit applies along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Stay in front of the behind limit.
    L1,
    /// Stay behind the front limit.
    L2,
}

impl Objective {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l1" => Some(Objective::L1),
            "l2" => Some(Objective::L2),
            _ => None,
        }
    }
}

/// Objective value split into its terms, each summed over time steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Angle hinges, already multiplied by the angle weight.
    pub angle: f64,
    pub velocity: f64,
    pub floor: f64,
    pub workspace: f64,
    /// Landing term; only the direct objective has one.
    pub distance: Option<f64>,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.angle + self.velocity + self.floor + self.workspace + self.distance.unwrap_or(0.0)
    }
}

/// Constraint terms of `l1` or `l2` over every step of the trajectory.
pub fn constraint_terms(traj: &Trajectory, objective: Objective, cfg: &PenaltyConfig) -> ObjectiveTerms {
    let mut t = ObjectiveTerms::default();
    let Some(first) = traj.arm_points.first() else {
        return t;
    };
    let base = first[0];
    for (js, points) in traj.joint_states.iter().zip(&traj.arm_points) {
        let mut angle = 0.0;
        for i in 0..NUM_JOINTS {
            angle += hinge(js.angles[i], cfg.angle_min[i], cfg.angle_max[i]);
            t.velocity += hinge(js.velocities[i], cfg.velocity_min[i], cfg.velocity_max[i]);
        }
        t.angle += cfg.angle_weight * angle;
        for p in points {
            t.floor += hinge(p[1] - base[1], cfg.floor_clearance - base[1], f64::INFINITY);
            let x = p[0] - base[0];
            t.workspace += match objective {
                Objective::L1 => hinge(x, cfg.behind_limit, f64::INFINITY),
                Objective::L2 => hinge(x, f64::NEG_INFINITY, cfg.front_limit),
            };
        }
    }
    t
}

pub fn objective_l1(traj: &Trajectory, cfg: &PenaltyConfig) -> f64 {
    constraint_terms(traj, Objective::L1, cfg).total()
}

pub fn objective_l2(traj: &Trajectory, cfg: &PenaltyConfig) -> f64 {
    constraint_terms(traj, Objective::L2, cfg).total()
}

/// `l1` plus a dead-zone landing term, `max(|x_final − p_g| − tol, 0)`,
/// where `x_final` is where the object ended up (the bowl if never released).
pub fn direct_terms(
    traj: &Trajectory,
    outcome: &ThrowOutcome,
    p_g: f64,
    cfg: &PenaltyConfig,
) -> ObjectiveTerms {
    let mut t = constraint_terms(traj, Objective::L1, cfg);
    t.distance = Some(((outcome.final_object_x - p_g).abs() - cfg.distance_tolerance).max(0.0));
    t
}

pub fn objective_direct(
    traj: &Trajectory,
    outcome: &ThrowOutcome,
    p_g: f64,
    cfg: &PenaltyConfig,
) -> f64 {
    direct_terms(traj, outcome, p_g, cfg).total()
}

/// Which space was searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchSpace {
    Latent,
    Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub space: SearchSpace,
    pub target: f64,
    pub motion: Motion,
    /// Unsquashed search vector of the best candidate.
    pub search_point: Vec<f64>,
    /// Squashed point: the latent `z`, or the normalized action.
    pub squashed: Vec<f64>,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    /// Generations run.
    pub generations: usize,
    /// Generation (1-based) in which the best candidate was found.
    pub best_generation: usize,
    pub evaluations: usize,
    pub landing_x: Option<f64>,
    pub final_object_x: f64,
    pub released: bool,
    pub converged: bool,
    /// Best value after each generation, non-increasing.
    pub best_history: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    /// Monotonic wall time of the search, seconds. Kept out of the JSON so
    /// results stay byte-reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl PlanResult {
    /// Landing error relative to the target; the final object position is
    /// used when the object never landed.
    pub fn relative_error(&self) -> f64 {
        (self.landing_x.unwrap_or(self.final_object_x) - self.target).abs() / self.target
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(crate::cmaes::TRACE_HEADER);
        out.push('\n');
        for r in &self.trace {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

struct Scored {
    value: f64,
    terms: ObjectiveTerms,
    motion: Motion,
    outcome: Option<ThrowOutcome>,
    squashed: Vec<f64>,
}

fn score_motion(
    motion: Motion,
    squashed: Vec<f64>,
    basis: &PrimitiveBasis,
    sim: &SimConfig,
    terms: impl Fn(&Trajectory, &ThrowOutcome) -> ObjectiveTerms,
) -> Result<Scored> {
    let series = decode(&motion, basis)?;
    match rollout(&series, sim) {
        Ok((traj, outcome)) => {
            let terms = terms(&traj, &outcome);
            Ok(Scored {
                value: terms.total(),
                terms,
                motion,
                outcome: Some(outcome),
                squashed,
            })
        }
        Err(Error::NonFiniteState { .. }) => Ok(Scored {
            value: NON_FINITE_PENALTY,
            terms: ObjectiveTerms::default(),
            motion,
            outcome: None,
            squashed,
        }),
        Err(e) => Err(e),
    }
}

/// Shared ask/evaluate/tell loop; stops at objective 0.
fn search(
    space: SearchSpace,
    target: f64,
    cma: &CmaesConfig,
    evaluate: impl Fn(&[f64]) -> Result<Scored> + Sync,
) -> Result<PlanResult> {
    let start = Instant::now();
    let mut es = Cmaes::new(cma)?;
    let mut best: Option<(Scored, Vec<f64>, usize)> = None;
    let mut best_history = Vec::new();
    let mut trace = Vec::new();
    let mut evaluations = 0;
    while es.generation() < cma.max_generations {
        let xs = es.ask()?;
        let scored: Vec<Scored> = xs.par_iter().map(|x| evaluate(x)).collect::<Result<_>>()?;
        evaluations += xs.len();
        let values: Vec<f64> = scored.iter().map(|s| s.value).collect();
        es.tell(&xs, &values)?;
        let gen = es.generation();
        for (s, x) in scored.into_iter().zip(xs) {
            if best.as_ref().is_none_or(|b| s.value < b.0.value) {
                best = Some((s, x, gen));
            }
        }
        let b = best.as_ref().expect("population is non-empty").0.value;
        best_history.push(b);
        trace.push(es.trace_row());
        if b <= 0.0 {
            break;
        }
    }
    let (s, x, best_generation) = best.ok_or_else(|| {
        Error::InvalidConfig("cmaes: max_generations must be positive".into())
    })?;
    let outcome = s.outcome.as_ref();
    Ok(PlanResult {
        space,
        target,
        converged: s.value == 0.0,
        objective: s.value,
        terms: s.terms,
        generations: es.generation(),
        best_generation,
        evaluations,
        landing_x: outcome.and_then(|o| o.landing_x),
        final_object_x: outcome.map_or(f64::NAN, |o| o.final_object_x),
        released: outcome.is_some_and(|o| o.released),
        motion: s.motion,
        search_point: x,
        squashed: s.squashed,
        best_history,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Searches `z` through the generator conditioned on `p_g`; the objective
/// has no landing term because the condition already encodes the target.
pub fn search_latent(
    model: &GanModel,
    p_g: f64,
    objective: Objective,
    cma: &CmaesConfig,
    penalty: &PenaltyConfig,
    sim: &SimConfig,
    basis: &PrimitiveBasis,
) -> Result<PlanResult> {
    penalty.validate()?;
    let [lo, hi] = model.normalizer.condition_range();
    if !(lo..=hi).contains(&p_g) {
        return Err(Error::ConditionOutOfRange(p_g));
    }
    let cma = CmaesConfig {
        dimension: model.dim_z,
        ..cma.clone()
    };
    search(SearchSpace::Latent, p_g, &cma, |x| {
        let z = squash(x);
        let motion = model.sample_motion(p_g, &z)?;
        score_motion(motion, z, basis, sim, |traj, _| constraint_terms(traj, objective, penalty))
    })
}

/// Baseline: searches the normalized action directly with the landing term.
pub fn search_action(
    p_g: f64,
    normalizer: &Normalizer,
    cma: &CmaesConfig,
    penalty: &PenaltyConfig,
    sim: &SimConfig,
    basis: &PrimitiveBasis,
) -> Result<PlanResult> {
    penalty.validate()?;
    if normalizer.motion_dim() != basis.action_dim() {
        return Err(Error::shape(basis.action_dim(), normalizer.motion_dim()));
    }
    let cma = CmaesConfig {
        dimension: normalizer.motion_dim(),
        ..cma.clone()
    };
    search(SearchSpace::Action, p_g, &cma, |x| {
        let u = squash(x);
        let motion = normalizer.denormalize_motion(&u)?;
        score_motion(motion, u, basis, sim, |traj, outcome| direct_terms(traj, outcome, p_g, penalty))
    })
}

/// Rollout of a planned motion, for export.
pub fn replay(result: &PlanResult, sim: &SimConfig, basis: &PrimitiveBasis) -> Result<(Trajectory, ThrowOutcome)> {
    rollout(&decode(&result.motion, basis)?, sim)
}

//! S-curve motion primitives and action decoding.
//!
//! A motion is an initial joint pose plus, per joint, a weighted sum of `J`
//! primitive position profiles `φ_j(t)`. Each profile is generated by a
//! piecewise-constant jerk over four segments split at `τ_j/2`, `τ_j` and
//! `(τ_j + T)/2`, where `τ_j = (j + 1)/(J + 2) · T`.
//!
//! Two jerk patterns are available:
//!
//! * [`PrimitiveVariant::NormalizedStep`] (default): accelerate to a peak
//!   velocity of `2/T` at `τ_j`, then decelerate to rest at `T`. Jerk signs
//!   `(+, −, −, +)` with magnitudes `8/(τ_j²T)` before `τ_j` and
//!   `8/((T − τ_j)²T)` after. The profile is a unit step: `φ_j(T) = 1`.
//! * [`PrimitiveVariant::VerbatimPaper`]: signs `(+, −, +, −)`, every segment
//!   with magnitude `8/(τ_j²T)`. Its end value grows like `(T − τ_j)³/(τ_j²T)`
//!   and it does not come to rest, so it is kept for comparison only.
//!
//! Profiles are integrated exactly (closed-form cubic per segment), so the
//! sampled tables do not depend on the grid spacing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of joints of the planar arm.
pub const NUM_JOINTS: usize = 3;

/// Jerk pattern used to build the primitive profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PrimitiveVariant {
    #[default]
    NormalizedStep,
    VerbatimPaper,
}

/// Parameters of a primitive basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveConfig {
    pub num_primitives: usize,
    /// Motion length `T` in seconds.
    pub duration: f64,
    pub variant: PrimitiveVariant,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        PrimitiveConfig {
            num_primitives: 10,
            duration: 1.0,
            variant: PrimitiveVariant::NormalizedStep,
        }
    }
}

/// One constant-jerk piece of a profile, with the state at its start.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    end: f64,
    jerk: f64,
    pos: f64,
    vel: f64,
    acc: f64,
}

impl Segment {
    fn eval(&self, t: f64) -> [f64; 3] {
        let s = t - self.start;
        [
            self.pos + self.vel * s + 0.5 * self.acc * s * s + self.jerk * s * s * s / 6.0,
            self.vel + self.acc * s + 0.5 * self.jerk * s * s,
            self.acc + self.jerk * s,
        ]
    }
}

/// Sampled primitive profiles on a uniform time grid.
#[derive(Debug, Clone)]
pub struct PrimitiveBasis {
    config: PrimitiveConfig,
    dt: f64,
    taus: Vec<f64>,
    segments: Vec<[Segment; 4]>,
    times: Vec<f64>,
    // [j][k]
    pos: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
}

/// Number of samples of a uniform grid over `[0, duration]`.
pub fn grid_len(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

impl PrimitiveBasis {
    pub fn new(config: PrimitiveConfig, dt: f64) -> Result<Self> {
        let j_count = config.num_primitives;
        let t_end = config.duration;
        if j_count == 0 {
            return Err(Error::InvalidConfig("need at least one primitive".into()));
        }
        if !(t_end.is_finite() && dt.is_finite() && dt > 0.0 && dt < t_end) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt < T, got dt = {dt}, T = {t_end}"
            )));
        }
        let taus: Vec<f64> = (0..j_count)
            .map(|j| (j + 1) as f64 / (j_count + 2) as f64 * t_end)
            .collect();
        // The first jerk segment [0, τ_0/2) must contain at least two grid samples.
        if taus[0] / 2.0 <= dt {
            return Err(Error::InvalidConfig(format!(
                "dt = {dt} does not resolve the shortest jerk segment ({:.4} s)",
                taus[0] / 2.0
            )));
        }

        let segments: Vec<[Segment; 4]> = taus
            .iter()
            .map(|&tau| build_segments(config.variant, tau, t_end))
            .collect();

        let n = grid_len(t_end, dt);
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let mut pos = vec![vec![0.0; n]; j_count];
        let mut vel = vec![vec![0.0; n]; j_count];
        let mut acc = vec![vec![0.0; n]; j_count];
        for (j, segs) in segments.iter().enumerate() {
            for (k, &t) in times.iter().enumerate() {
                let [p, v, a] = eval_segments(segs, t);
                pos[j][k] = p;
                vel[j][k] = v;
                acc[j][k] = a;
            }
        }


        Ok(PrimitiveBasis {
            config,
            dt,
            taus,
            segments,
            times,
            pos,
            vel,
            acc,
        })
    }

    pub fn config(&self) -> &PrimitiveConfig {
        &self.config
    }

    pub fn num_primitives(&self) -> usize {
        self.config.num_primitives
    }

    pub fn duration(&self) -> f64 {
        self.config.duration
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Switching times `τ_j`.
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Dimension of an action: initial pose plus one weight per joint and primitive.
    pub fn action_dim(&self) -> usize {
        NUM_JOINTS * (1 + self.config.num_primitives)
    }

    pub fn phi(&self, j: usize) -> &[f64] {
        &self.pos[j]
    }

    pub fn phi_dot(&self, j: usize) -> &[f64] {
        &self.vel[j]
    }

    pub fn phi_ddot(&self, j: usize) -> &[f64] {
        &self.acc[j]
    }

    /// Exact `(φ_j, φ̇_j, φ̈_j)` at an arbitrary time; held constant after `T`.
    pub fn eval(&self, j: usize, t: f64) -> [f64; 3] {
        eval_segments(&self.segments[j], t)
    }

    /// Jerk `φ⃛_j` at time `t`, zero outside `[0, T)`.
    pub fn jerk(&self, j: usize, t: f64) -> f64 {
        let segs = &self.segments[j];
        if t < 0.0 || t >= self.config.duration {
            return 0.0;
        }
        segs.iter()
            .find(|s| t >= s.start && t < s.end)
            .map_or(0.0, |s| s.jerk)
    }

    /// CSV dump with header `t,phi0,...,phi{J-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 0..self.num_primitives() {
            let _ = write!(out, ",phi{j}");
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:.8e}");
            for j in 0..self.num_primitives() {
                let _ = write!(out, ",{:.8e}", self.pos[j][k]);
            }
            out.push('\n');
        }
        out
    }
}

fn build_segments(variant: PrimitiveVariant, tau: f64, t_end: f64) -> [Segment; 4] {
    let early = 8.0 / (tau * tau * t_end);
    let rest = t_end - tau;
    let (late, signs) = match variant {
        PrimitiveVariant::NormalizedStep => (8.0 / (rest * rest * t_end), [1.0, -1.0, -1.0, 1.0]),
        PrimitiveVariant::VerbatimPaper => (early, [1.0, -1.0, 1.0, -1.0]),
    };
    let bounds = [0.0, tau / 2.0, tau, (tau + t_end) / 2.0, t_end];
    let magnitudes = [early, early, late, late];

    let mut state = [0.0f64; 3];
    let mut segs = [Segment {
        start: 0.0,
        end: 0.0,
        jerk: 0.0,
        pos: 0.0,
        vel: 0.0,
        acc: 0.0,
    }; 4];
    for i in 0..4 {
        let seg = Segment {
            start: bounds[i],
            end: bounds[i + 1],
            jerk: signs[i] * magnitudes[i],
            pos: state[0],
            vel: state[1],
            acc: state[2],
        };
        state = seg.eval(seg.end);
        segs[i] = seg;
    }
    segs
}

fn eval_segments(segs: &[Segment; 4], t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [segs[0].pos, segs[0].vel, segs[0].acc];
    }
    let last = &segs[3];
    if t >= last.end {
        return last.eval(last.end);
    }
    let seg = segs
        .iter()
        .find(|s| t < s.end)
        .expect("t < T lies in some segment");
    seg.eval(t)
}

/// An action: initial pose and the `3 × J` primitive weights (row-major by joint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub theta_init: [f64; NUM_JOINTS],
    pub weights: Vec<f64>,
}

impl Motion {
    pub fn zero(theta_init: [f64; NUM_JOINTS], num_primitives: usize) -> Self {
        Motion {
            theta_init,
            weights: vec![0.0; NUM_JOINTS * num_primitives],
        }
    }

    pub fn num_primitives(&self) -> usize {
        self.weights.len() / NUM_JOINTS
    }

    pub fn weight(&self, joint: usize, primitive: usize) -> f64 {
        self.weights[joint * self.num_primitives() + primitive]
    }

    pub fn weight_mut(&mut self, joint: usize, primitive: usize) -> &mut f64 {
        let j = self.num_primitives();
        &mut self.weights[joint * j + primitive]
    }

    /// Flattened action vector `[θ_init, w_00, .., w_0(J-1), w_10, ..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(NUM_JOINTS + self.weights.len());
        v.extend_from_slice(&self.theta_init);
        v.extend_from_slice(&self.weights);
        v
    }

    pub fn from_slice(action: &[f64]) -> Result<Self> {
        if action.len() < NUM_JOINTS || (action.len() - NUM_JOINTS) % NUM_JOINTS != 0 {
            return Err(Error::shape("3 + 3·J values", action.len()));
        }
        Ok(Motion {
            theta_init: [action[0], action[1], action[2]],
            weights: action[NUM_JOINTS..].to_vec(),
        })
    }
}

/// Joint angles, velocities and accelerations on the basis time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSeries {
    pub times: Vec<f64>,
    pub angles: Vec<[f64; NUM_JOINTS]>,
    pub velocities: Vec<[f64; NUM_JOINTS]>,
    pub accelerations: Vec<[f64; NUM_JOINTS]>,
}

impl JointSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// `θ_i(t) = θ_i^init + Σ_j w_ij φ_j(t)` and its analytic derivatives.
pub fn decode(motion: &Motion, basis: &PrimitiveBasis) -> Result<JointSeries> {
    let j_count = basis.num_primitives();
    if motion.weights.len() != NUM_JOINTS * j_count {
        return Err(Error::shape(
            format!("{} weights", NUM_JOINTS * j_count),
            motion.weights.len(),
        ));
    }
    let n = basis.len();
    let mut angles = vec![[0.0; NUM_JOINTS]; n];
    let mut velocities = vec![[0.0; NUM_JOINTS]; n];
    let mut accelerations = vec![[0.0; NUM_JOINTS]; n];
    let mut col = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..NUM_JOINTS {
        let w = &motion.weights[i * j_count..(i + 1) * j_count];
        let init = [motion.theta_init[i], 0.0, 0.0];
        let tables = [&basis.pos, &basis.vel, &basis.acc];
        for ((c, table), x0) in col.iter_mut().zip(tables).zip(init) {
            c.fill(x0);
            // Summed term by term per step, matching a direct evaluation.
            for (wj, phi) in w.iter().zip(table.iter()) {
                for (ck, pk) in c.iter_mut().zip(phi) {
                    *ck += wj * pk;
                }
            }
        }
        for k in 0..n {
            angles[k][i] = col[0][k];
            velocities[k][i] = col[1][k];
            accelerations[k][i] = col[2][k];
        }
    }
    Ok(JointSeries {
        times: basis.times().to_vec(),
        angles,
        velocities,
        accelerations,
    })
}

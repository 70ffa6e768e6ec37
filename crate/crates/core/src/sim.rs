//! Discrete-time physics of the planar 3-link arm and the thrown object.
//!
//! Joint states follow the exact double integrator
//! `θ ← θ + θ̇·dt + ½·u·dt²`, `θ̇ ← θ̇ + u·dt`. The object is a point mass that
//! rides in the bowl at the end-effector while `n_e · (a_e − g) ≥ 0` and
//! flies ballistically after the first step where that test fails.
//! Separation is permanent.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{JointSeries, NUM_JOINTS};

pub type Vec2 = [f64; 2];

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Joint angle and velocity bands (radians, radians/second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub angle_min: [f64; NUM_JOINTS],
    pub angle_max: [f64; NUM_JOINTS],
    pub velocity_min: [f64; NUM_JOINTS],
    pub velocity_max: [f64; NUM_JOINTS],
}

impl JointLimits {
    /// Hardware limits of the throwing arm.
    pub fn throwing_arm() -> Self {
        let r = f64::to_radians;
        JointLimits {
            angle_min: [r(-45.0), r(-45.0), r(-90.0)],
            angle_max: [r(105.0), r(105.0), r(90.0)],
            velocity_min: [r(-120.0), r(-180.0), r(-180.0)],
            velocity_max: [r(120.0), r(180.0), r(180.0)],
        }
    }

    /// Largest excess of any joint angle beyond its band, 0 inside.
    pub fn angle_violation(&self, angles: &[f64; NUM_JOINTS]) -> f64 {
        (0..NUM_JOINTS)
            .map(|i| band_excess(angles[i], self.angle_min[i], self.angle_max[i]))
            .fold(0.0, f64::max)
    }

    pub fn velocity_violation(&self, velocities: &[f64; NUM_JOINTS]) -> f64 {
        (0..NUM_JOINTS)
            .map(|i| band_excess(velocities[i], self.velocity_min[i], self.velocity_max[i]))
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..NUM_JOINTS {
            if !(self.angle_min[i] < self.angle_max[i] && self.velocity_min[i] < self.velocity_max[i])
            {
                return Err(Error::InvalidConfig(format!("joint {i} limits are not ordered")));
            }
        }
        Ok(())
    }
}

impl Default for JointLimits {
    fn default() -> Self {
        Self::throwing_arm()
    }
}

fn band_excess(value: f64, lo: f64, hi: f64) -> f64 {
    (lo - value).max(0.0) + (value - hi).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Time step in seconds.
    pub dt: f64,
    pub link_lengths: [f64; NUM_JOINTS],
    /// Position of the joint-0 axis.
    pub base_position: Vec2,
    pub gravity: Vec2,
    pub floor_y: f64,
    /// Angle of the bowl normal relative to the last link.
    pub bowl_normal_offset: f64,
    /// Settling window after the motion ends, in seconds.
    pub hold_duration: f64,
    pub limits: JointLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            link_lengths: [0.30, 0.28, 0.20],
            base_position: [0.0, 0.5],
            gravity: [0.0, -9.81],
            floor_y: 0.0,
            bowl_normal_offset: std::f64::consts::FRAC_PI_2,
            hold_duration: 2.0,
            limits: JointLimits::default(),
        }
    }
}

impl SimConfig {
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.link_lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidConfig("link lengths must be positive".into()));
        }
        if !(self.gravity[1] < 0.0 && self.gravity[0].is_finite()) {
            return Err(Error::InvalidConfig("gravity must point downwards".into()));
        }
        if !(self.hold_duration >= 0.0) {
            return Err(Error::InvalidConfig("hold_duration must be non-negative".into()));
        }
        self.limits.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub angles: [f64; NUM_JOINTS],
    pub velocities: [f64; NUM_JOINTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    InBowl,
    Ballistic,
    Landed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::InBowl => "InBowl",
            Phase::Ballistic => "Ballistic",
            Phase::Landed => "Landed",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s.trim() {
            "InBowl" | "0" => Some(Phase::InBowl),
            "Ballistic" | "1" => Some(Phase::Ballistic),
            "Landed" | "2" => Some(Phase::Landed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub phase: Phase,
}

/// Positions of the base, the two intermediate joints, and the end-effector.
pub type ArmPoints = [Vec2; NUM_JOINTS + 1];

/// `p_k = base + Σ_{i≤k} L_i (cos Θ_i, sin Θ_i)` with cumulative angles `Θ_i`.
pub fn forward_kinematics(angles: &[f64; NUM_JOINTS], cfg: &SimConfig) -> ArmPoints {
    arm_pose(angles, cfg).0
}

/// Unit normal of the bowl, at angle `Σθ_i + bowl_normal_offset`.
pub fn ee_normal(angles: &[f64; NUM_JOINTS], cfg: &SimConfig) -> Vec2 {
    arm_pose(angles, cfg).1
}

fn arm_pose(angles: &[f64; NUM_JOINTS], cfg: &SimConfig) -> (ArmPoints, Vec2) {
    let mut points = [cfg.base_position; NUM_JOINTS + 1];
    let mut cumulative = 0.0;
    let mut p = cfg.base_position;
    let mut dir = [1.0, 0.0];
    for i in 0..NUM_JOINTS {
        cumulative += angles[i];
        let (s, c) = cumulative.sin_cos();
        dir = [c, s];
        p = [p[0] + cfg.link_lengths[i] * c, p[1] + cfg.link_lengths[i] * s];
        points[i + 1] = p;
    }
    let (so, co) = cfg.bowl_normal_offset.sin_cos();
    let normal = [dir[0] * co - dir[1] * so, dir[0] * so + dir[1] * co];
    (points, normal)
}

/// Exact double-integrator step under constant acceleration over `dt`.
pub fn integrate<const N: usize>(
    pos: &[f64; N],
    vel: &[f64; N],
    accel: &[f64; N],
    dt: f64,
) -> ([f64; N], [f64; N]) {
    let mut p = *pos;
    let mut v = *vel;
    for i in 0..N {
        p[i] += vel[i] * dt + 0.5 * accel[i] * dt * dt;
        v[i] += accel[i] * dt;
    }
    (p, v)
}

pub fn step_joint(state: &JointState, accel: &[f64; NUM_JOINTS], cfg: &SimConfig) -> JointState {
    let (angles, velocities) = integrate(&state.angles, &state.velocities, accel, cfg.dt);
    JointState { angles, velocities }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contact {
    KeepContact,
    Release,
}

/// The bowl keeps supporting the object while `n_e · (a_e − g) ≥ 0`.
pub fn contact_decision(normal: Vec2, ee_accel: Vec2, gravity: Vec2) -> Contact {
    let push = dot(normal, [ee_accel[0] - gravity[0], ee_accel[1] - gravity[1]]);
    if push >= 0.0 {
        Contact::KeepContact
    } else {
        Contact::Release
    }
}

/// Time after release at which the parabola crosses `floor_y`.
fn flight_time(height: f64, vy: f64, gy: f64) -> f64 {
    let g = -gy;
    let disc = (vy * vy + 2.0 * g * height).sqrt();
    if vy > 0.0 {
        (vy + disc) / g
    } else if disc - vy > 0.0 {
        2.0 * height / (disc - vy)
    } else {
        0.0
    }
}

/// Absolute x-coordinate where a point released at `pos` with `vel` reaches the
/// floor. Returns [`Error::DegenerateRelease`] when the release is below the floor.
pub fn landing_distance(pos: Vec2, vel: Vec2, cfg: &SimConfig) -> Result<f64> {
    let height = pos[1] - cfg.floor_y;
    if height < 0.0 {
        return Err(Error::DegenerateRelease { release_x: pos[0] });
    }
    let t = flight_time(height, vel[1], cfg.gravity[1]);
    Ok(pos[0] + vel[0] * t + 0.5 * cfg.gravity[0] * t * t)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub joint_states: Vec<JointState>,
    pub arm_points: Vec<ArmPoints>,
    pub ee_positions: Vec<Vec2>,
    pub ee_velocities: Vec<Vec2>,
    pub ee_accelerations: Vec<Vec2>,
    pub ee_normals: Vec<Vec2>,
    pub object_states: Vec<ObjectState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub const CSV_HEADER: &'static str = "t,th1,th2,th3,dth1,dth2,dth3,ee_x,ee_y,obj_x,obj_y,phase";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 160);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for k in 0..self.len() {
            let js = &self.joint_states[k];
            let ee = self.ee_positions[k];
            let obj = &self.object_states[k];
            let _ = write!(out, "{:.8e}", self.times[k]);
            for v in js.angles.iter().chain(js.velocities.iter()) {
                let _ = write!(out, ",{v:.8e}");
            }
            let _ = writeln!(
                out,
                ",{:.8e},{:.8e},{:.8e},{:.8e},{}",
                ee[0],
                ee[1],
                obj.position[0],
                obj.position[1],
                obj.phase.as_str()
            );
        }
        out
    }
}

/// One parsed row of a trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub angles: [f64; NUM_JOINTS],
    pub velocities: [f64; NUM_JOINTS],
    pub ee: Vec2,
    pub object: Vec2,
    pub phase: Phase,
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == Trajectory::CSV_HEADER => {}
        other => {
            return Err(Error::format(
                "trajectory csv",
                format!("unexpected header {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::format(
                "trajectory csv",
                format!("line {}: expected 12 fields, got {}", lineno + 2, fields.len()),
            ));
        }
        let mut nums = [0.0; 11];
        for (i, f) in fields[..11].iter().enumerate() {
            nums[i] = f.trim().parse().map_err(|_| {
                Error::format("trajectory csv", format!("line {}: bad number {f:?}", lineno + 2))
            })?;
        }
        let phase = Phase::parse(fields[11]).ok_or_else(|| {
            Error::format(
                "trajectory csv",
                format!("line {}: bad phase {:?}", lineno + 2, fields[11]),
            )
        })?;
        rows.push(TrajectoryRow {
            t: nums[0],
            angles: [nums[1], nums[2], nums[3]],
            velocities: [nums[4], nums[5], nums[6]],
            ee: [nums[7], nums[8]],
            object: [nums[9], nums[10]],
            phase,
        });
    }
    Ok(rows)
}

/// Summary of a throw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrowOutcome {
    pub released: bool,
    pub release_time: Option<f64>,
    pub release_position: Option<Vec2>,
    pub release_velocity: Option<Vec2>,
    /// Landing x relative to the base x; absent when never released or
    /// released below the floor.
    pub landing_x: Option<f64>,
    /// Released below the floor.
    pub degenerate: bool,
    /// Where the object ended up along x (relative to the base): the landing
    /// point, the release point for degenerate releases, or the bowl position
    /// when it was never released.
    pub final_object_x: f64,
    pub max_angle_violation: f64,
    pub max_velocity_violation: f64,
    pub contact_at_start: bool,
}

impl ThrowOutcome {
    pub fn within_limits(&self) -> bool {
        self.max_angle_violation == 0.0 && self.max_velocity_violation == 0.0
    }
}

/// Second-order finite-difference velocity and acceleration of the
/// end-effector at step `k` of `n`, one-sided at both ends.
pub(crate) fn ee_derivatives(ee: &[ArmPoints], k: usize, n: usize, dt: f64) -> (Vec2, Vec2) {
    let p = |i: usize, d: usize| ee[i][NUM_JOINTS][d];
    let inv2 = 1.0 / (2.0 * dt);
    let inv_sq = 1.0 / (dt * dt);
    let mut vel = [0.0; 2];
    let mut acc = [0.0; 2];
    for d in 0..2 {
        if k == 0 {
            vel[d] = (-3.0 * p(0, d) + 4.0 * p(1, d) - p(2, d)) * inv2;
            acc[d] = (2.0 * p(0, d) - 5.0 * p(1, d) + 4.0 * p(2, d) - p(3, d)) * inv_sq;
        } else if k == n - 1 {
            vel[d] = (3.0 * p(k, d) - 4.0 * p(k - 1, d) + p(k - 2, d)) * inv2;
            acc[d] = (2.0 * p(k, d) - 5.0 * p(k - 1, d) + 4.0 * p(k - 2, d) - p(k - 3, d)) * inv_sq;
        } else {
            vel[d] = (p(k + 1, d) - p(k - 1, d)) * inv2;
            acc[d] = (p(k + 1, d) - 2.0 * p(k, d) + p(k - 1, d)) * inv_sq;
        }
    }
    (vel, acc)
}

struct Release {
    step: Option<usize>,
    time: f64,
    position: Vec2,
    velocity: Vec2,
}

/// Arm poses along a series, computed on demand.
struct Kinematics<'a> {
    series: &'a JointSeries,
    cfg: &'a SimConfig,
    points: Vec<ArmPoints>,
    normals: Vec<Vec2>,
}

impl<'a> Kinematics<'a> {
    fn new(series: &'a JointSeries, cfg: &'a SimConfig) -> Result<Self> {
        let n = series.len();
        if n < 4 || series.angles.len() != n || series.velocities.len() != n {
            return Err(Error::shape("at least 4 samples per series", n));
        }
        Ok(Kinematics {
            series,
            cfg,
            points: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
        })
    }

    fn len(&self) -> usize {
        self.series.len()
    }

    /// Computes poses for steps `0..=k`.
    fn ensure(&mut self, k: usize) -> Result<()> {
        while self.points.len() <= k {
            let step = self.points.len();
            let angles = &self.series.angles[step];
            if angles
                .iter()
                .chain(self.series.velocities[step].iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFiniteState { step });
            }
            let (points, normal) = arm_pose(angles, self.cfg);
            self.points.push(points);
            self.normals.push(normal);
        }
        Ok(())
    }

    /// End-effector velocity and acceleration at step `k`.
    fn derivatives(&mut self, k: usize) -> Result<(Vec2, Vec2)> {
        let n = self.len();
        let needed = if k == 0 { 3 } else if k == n - 1 { k } else { k + 1 };
        self.ensure(needed)?;
        Ok(ee_derivatives(&self.points, k, n, self.cfg.dt))
    }
}

fn find_release(kin: &mut Kinematics) -> Result<(bool, Option<Release>)> {
    let n = kin.len();
    let cfg = kin.cfg;
    let mut contact_at_start = false;
    for k in 0..n {
        let (vel, acc) = kin.derivatives(k)?;
        let decision = contact_decision(kin.normals[k], acc, cfg.gravity);
        if k == 0 {
            contact_at_start = decision == Contact::KeepContact;
        }
        if decision == Contact::Release {
            let release = Release {
                step: Some(k),
                time: kin.series.times[k],
                position: kin.points[k][NUM_JOINTS],
                velocity: vel,
            };
            return Ok((contact_at_start, Some(release)));
        }
    }
    // Holding the final pose: the end-effector is at rest, so the contact
    // test is the same at every step of the window.
    if cfg.hold_duration >= cfg.dt
        && contact_decision(kin.normals[n - 1], [0.0, 0.0], cfg.gravity) == Contact::Release
    {
        let release = Release {
            step: None,
            time: kin.series.times[n - 1] + cfg.dt,
            position: kin.points[n - 1][NUM_JOINTS],
            velocity: [0.0, 0.0],
        };
        return Ok((contact_at_start, Some(release)));
    }
    Ok((contact_at_start, None))
}

fn violations(series: &JointSeries, cfg: &SimConfig) -> (f64, f64) {
    let angle = series
        .angles
        .iter()
        .map(|a| cfg.limits.angle_violation(a))
        .fold(0.0, f64::max);
    let velocity = series
        .velocities
        .iter()
        .map(|v| cfg.limits.velocity_violation(v))
        .fold(0.0, f64::max);
    (angle, velocity)
}

fn outcome(
    series: &JointSeries,
    cfg: &SimConfig,
    final_ee_x: f64,
    contact_at_start: bool,
    release: Option<&Release>,
) -> ThrowOutcome {
    let (max_angle_violation, max_velocity_violation) = violations(series, cfg);
    let base_x = cfg.base_position[0];
    match release {
        None => ThrowOutcome {
            released: false,
            release_time: None,
            release_position: None,
            release_velocity: None,
            landing_x: None,
            degenerate: false,
            final_object_x: final_ee_x - base_x,
            max_angle_violation,
            max_velocity_violation,
            contact_at_start,
        },
        Some(r) => {
            let (landing_x, degenerate, final_x) =
                match landing_distance(r.position, r.velocity, cfg) {
                    Ok(x) => (Some(x - base_x), false, x - base_x),
                    Err(_) => (None, true, r.position[0] - base_x),
                };
            ThrowOutcome {
                released: true,
                release_time: Some(r.time),
                release_position: Some(r.position),
                release_velocity: Some(r.velocity),
                landing_x,
                degenerate,
                final_object_x: final_x,
                max_angle_violation,
                max_velocity_violation,
                contact_at_start,
            }
        }
    }
}

/// Throw outcome without recording the trajectory.
pub fn simulate(series: &JointSeries, cfg: &SimConfig) -> Result<ThrowOutcome> {
    let mut kin = Kinematics::new(series, cfg)?;
    let (contact_at_start, release) = find_release(&mut kin)?;
    // The bowl position only matters if the object never left it.
    let final_ee_x = if release.is_none() {
        kin.points[series.len() - 1][NUM_JOINTS][0]
    } else {
        0.0
    };
    Ok(outcome(series, cfg, final_ee_x, contact_at_start, release.as_ref()))
}

/// Full rollout on the series grid plus the throw outcome.
pub fn rollout(series: &JointSeries, cfg: &SimConfig) -> Result<(Trajectory, ThrowOutcome)> {
    let mut kin = Kinematics::new(series, cfg)?;
    let (contact_at_start, release) = find_release(&mut kin)?;
    let n = series.len();
    kin.ensure(n - 1)?;
    let result = outcome(
        series,
        cfg,
        kin.points[n - 1][NUM_JOINTS][0],
        contact_at_start,
        release.as_ref(),
    );
    let (ee_velocities, ee_accelerations): (Vec<Vec2>, Vec<Vec2>) = (0..n)
        .map(|k| ee_derivatives(&kin.points, k, n, cfg.dt))
        .unzip();

    let release_step = release.as_ref().and_then(|r| r.step);
    let landing_abs = result.landing_x.map(|x| x + cfg.base_position[0]);
    let mut object_states = Vec::with_capacity(n);
    let mut obj = ObjectState {
        position: kin.points[0][NUM_JOINTS],
        velocity: ee_velocities[0],
        phase: Phase::InBowl,
    };
    for k in 0..n {
        let ee = kin.points[k][NUM_JOINTS];
        obj = match (obj.phase, release_step) {
            (Phase::InBowl, Some(r)) if k == r => ObjectState {
                position: ee,
                velocity: ee_velocities[k],
                phase: Phase::Ballistic,
            },
            (Phase::InBowl, _) => ObjectState {
                position: ee,
                velocity: ee_velocities[k],
                phase: Phase::InBowl,
            },
            (Phase::Ballistic, _) => {
                let (p, v) = integrate(&obj.position, &obj.velocity, &cfg.gravity, cfg.dt);
                if p[1] < cfg.floor_y {
                    ObjectState {
                        position: [landing_abs.unwrap_or(p[0]), cfg.floor_y],
                        velocity: [0.0, 0.0],
                        phase: Phase::Landed,
                    }
                } else {
                    ObjectState {
                        position: p,
                        velocity: v,
                        phase: Phase::Ballistic,
                    }
                }
            }
            (Phase::Landed, _) => obj,
        };
        if !(obj.position.iter().chain(obj.velocity.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFiniteState { step: k });
        }
        object_states.push(obj);
    }

    let joint_states = series
        .angles
        .iter()
        .zip(&series.velocities)
        .map(|(a, v)| JointState {
            angles: *a,
            velocities: *v,
        })
        .collect();
    let trajectory = Trajectory {
        times: series.times.clone(),
        joint_states,
        ee_positions: kin.points.iter().map(|p| p[NUM_JOINTS]).collect(),
        arm_points: kin.points,
        ee_velocities,
        ee_accelerations,
        ee_normals: kin.normals,
        object_states,
    };
    Ok((trajectory, result))
}

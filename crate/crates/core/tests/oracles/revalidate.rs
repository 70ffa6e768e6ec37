//! Independent re-check of dataset records: joint paths from the closed-form
//! profiles, forward kinematics by angle sums, release by the bowl contact
//! test on finite-difference accelerations, and landing from the quadratic
//! flight equation.

use latent_throw::dataset::{Dataset, GenConfig, Sample};
use latent_throw::primitives::PrimitiveBasis;
use latent_throw::sim::SimConfig;

/// Slack on joint limit checks, absorbing summation-order rounding.
const LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Default)]
pub struct Report {
    pub records: usize,
    pub distance_mismatch: Vec<usize>,
    pub out_of_range: Vec<usize>,
    pub limit_violations: Vec<usize>,
    pub no_contact_at_start: Vec<usize>,
    pub histogram: Vec<usize>,
    pub worst_distance_gap: f64,
}

impl Report {
    pub fn all_valid(&self) -> bool {
        self.distance_mismatch.is_empty()
            && self.out_of_range.is_empty()
            && self.limit_violations.is_empty()
            && self.no_contact_at_start.is_empty()
    }

    pub fn bins_equal(&self) -> bool {
        self.histogram.windows(2).all(|w| w[0] == w[1])
    }
}

fn end_effector(angles: [f64; 3], sim: &SimConfig) -> ([f64; 2], f64) {
    let mut p = sim.base_position;
    let mut heading = 0.0;
    for i in 0..3 {
        heading += angles[i];
        p[0] += sim.link_lengths[i] * heading.cos();
        p[1] += sim.link_lengths[i] * heading.sin();
    }
    (p, heading)
}

fn joint_path(s: &Sample, basis: &PrimitiveBasis) -> Vec<([f64; 3], [f64; 3])> {
    let j_count = basis.num_primitives();
    basis
        .times()
        .iter()
        .map(|&t| {
            let mut ang = s.theta_init;
            let mut vel = [0.0; 3];
            for i in 0..3 {
                for j in 0..j_count {
                    let [p, v, _] = basis.eval(j, t);
                    ang[i] += s.weights[i * j_count + j] * p;
                    vel[i] += s.weights[i * j_count + j] * v;
                }
            }
            (ang, vel)
        })
        .collect()
}

fn flight_landing(pos: [f64; 2], vel: [f64; 2], sim: &SimConfig) -> Option<f64> {
    // y(t) = h + vy t − g t²/2 = 0, positive root.
    let g = -sim.gravity[1];
    let h = pos[1] - sim.floor_y;
    if h < 0.0 {
        return None;
    }
    let t = (vel[1] + (vel[1] * vel[1] + 2.0 * g * h).sqrt()) / g;
    Some(pos[0] + vel[0] * t + 0.5 * sim.gravity[0] * t * t - sim.base_position[0])
}

/// `(contact at t = 0, landing relative to the base)`.
fn throw(path: &[([f64; 3], [f64; 3])], sim: &SimConfig) -> (bool, Option<f64>) {
    let n = path.len();
    let dt = sim.dt;
    let poses: Vec<([f64; 2], f64)> = path.iter().map(|(a, _)| end_effector(*a, sim)).collect();
    let x = |k: usize| poses[k].0;
    let normal = |k: usize| {
        let a = poses[k].1 + sim.bowl_normal_offset;
        [a.cos(), a.sin()]
    };
    let supports = |k: usize, acc: [f64; 2]| {
        let nk = normal(k);
        nk[0] * (acc[0] - sim.gravity[0]) + nk[1] * (acc[1] - sim.gravity[1]) >= 0.0
    };
    let mut contact0 = false;
    for k in 0..n {
        let (vel, acc): ([f64; 2], [f64; 2]) = if k == 0 {
            (
                std::array::from_fn(|d| (-3.0 * x(0)[d] + 4.0 * x(1)[d] - x(2)[d]) / (2.0 * dt)),
                std::array::from_fn(|d| (2.0 * x(0)[d] - 5.0 * x(1)[d] + 4.0 * x(2)[d] - x(3)[d]) / (dt * dt)),
            )
        } else if k == n - 1 {
            (
                std::array::from_fn(|d| (3.0 * x(k)[d] - 4.0 * x(k - 1)[d] + x(k - 2)[d]) / (2.0 * dt)),
                std::array::from_fn(|d| {
                    (2.0 * x(k)[d] - 5.0 * x(k - 1)[d] + 4.0 * x(k - 2)[d] - x(k - 3)[d]) / (dt * dt)
                }),
            )
        } else {
            (
                std::array::from_fn(|d| (x(k + 1)[d] - x(k - 1)[d]) / (2.0 * dt)),
                std::array::from_fn(|d| (x(k + 1)[d] - 2.0 * x(k)[d] + x(k - 1)[d]) / (dt * dt)),
            )
        };
        let keep = supports(k, acc);
        if k == 0 {
            contact0 = keep;
        }
        if !keep {
            return (contact0, flight_landing(x(k), vel, sim));
        }
    }
    if !supports(n - 1, [0.0, 0.0]) {
        return (contact0, flight_landing(x(n - 1), [0.0, 0.0], sim));
    }
    (contact0, None)
}

fn within_limits(path: &[([f64; 3], [f64; 3])], sim: &SimConfig) -> bool {
    let l = &sim.limits;
    path.iter().all(|(a, v)| {
        (0..3).all(|i| {
            a[i] >= l.angle_min[i] - LIMIT_SLACK
                && a[i] <= l.angle_max[i] + LIMIT_SLACK
                && v[i] >= l.velocity_min[i] - LIMIT_SLACK
                && v[i] <= l.velocity_max[i] + LIMIT_SLACK
        })
    })
}

/// Re-checks every record; `tolerance` bounds the gap between the stored and
/// recomputed landing distance.
pub fn revalidate(ds: &Dataset, gen: &GenConfig, sim: &SimConfig, basis: &PrimitiveBasis, tolerance: f64) -> Report {
    let [lo, hi] = gen.distance_range;
    let mut report = Report {
        records: ds.len(),
        histogram: vec![0; gen.num_bins()],
        ..Report::default()
    };
    for (idx, s) in ds.samples.iter().enumerate() {
        let path = joint_path(s, basis);
        if !within_limits(&path, sim) {
            report.limit_violations.push(idx);
        }
        let (contact0, landing) = throw(&path, sim);
        if !contact0 {
            report.no_contact_at_start.push(idx);
        }
        match landing {
            Some(d) => {
                let gap = (d - s.target_distance).abs();
                report.worst_distance_gap = report.worst_distance_gap.max(gap);
                if gap > tolerance {
                    report.distance_mismatch.push(idx);
                }
                if !(lo..=hi).contains(&d) {
                    report.out_of_range.push(idx);
                }
            }
            None => report.distance_mismatch.push(idx),
        }
        if (lo..=hi).contains(&s.target_distance) {
            let bin = (((s.target_distance - lo) / gen.bin_width).floor() as usize).min(report.histogram.len() - 1);
            report.histogram[bin] += 1;
        } else {
            report.out_of_range.push(idx);
        }
    }
    report
}

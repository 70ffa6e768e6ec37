//! Self-supervised generation of throwing-motion training data.
//!
//! Candidates are drawn uniformly (initial pose inside the joint angle bands,
//! weights in `[-2, 2)`), simulated, and kept when the throw lands in the
//! target distance range, the object starts in contact with the bowl, and no
//! joint leaves its angle or velocity band. Kept samples are then levelled so
//! every distance bin holds the same number of samples.
//!
//! Joint limits only involve one joint at a time, so the generator draws each
//! joint's `(θ_init_i, w_i·)` by rejection against that joint's limits before
//! combining them. Conditioned on passing the limits this is the same
//! distribution as rejecting whole candidates, at a fraction of the cost.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::primitives::{decode, Motion, PrimitiveBasis, NUM_JOINTS};
use crate::rng::{self, Rng};
use crate::sim::{simulate, JointLimits, SimConfig, ThrowOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Valid samples to collect before levelling.
    pub target_count: usize,
    /// Keep collecting until every distance bin holds at least this many
    /// samples, so the levelled file has `min_per_bin · bins` records.
    pub min_per_bin: usize,
    pub bin_width: f64,
    pub rng_seed: u64,
    pub distance_range: [f64; 2],
    pub weight_range: [f64; 2],
    /// Independent sampling streams; fixed so output does not depend on the
    /// number of worker threads.
    pub shards: usize,
    /// Joint-feasible candidates simulated per shard and round.
    pub candidates_per_shard: usize,
    /// Candidates simulated before the acceptance rate is checked.
    pub probe_window: u64,
    pub min_acceptance: f64,
    /// Hard stop on simulated candidates (0 = unlimited).
    pub max_candidates: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            target_count: 20_000,
            min_per_bin: 667,
            bin_width: 0.02,
            rng_seed: 0,
            distance_range: [0.8, 1.4],
            weight_range: [-2.0, 2.0],
            shards: 8,
            candidates_per_shard: 20_000,
            probe_window: 100_000,
            min_acceptance: 1e-5,
            max_candidates: 0,
        }
    }
}

impl GenConfig {
    pub fn num_bins(&self) -> usize {
        let span = self.distance_range[1] - self.distance_range[0];
        (span / self.bin_width).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let span = self.distance_range[1] - self.distance_range[0];
        if !(span > 0.0 && self.bin_width > 0.0) {
            return Err(Error::InvalidConfig("empty distance range or bin width".into()));
        }
        let bins = self.num_bins();
        if bins == 0 || (bins as f64 * self.bin_width - span).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "bin width {} does not divide the distance range",
                self.bin_width
            )));
        }
        if !(self.weight_range[0] < self.weight_range[1]) {
            return Err(Error::InvalidConfig("empty weight range".into()));
        }
        if self.shards == 0 || self.candidates_per_shard == 0 {
            return Err(Error::InvalidConfig("shards and batch size must be positive".into()));
        }
        Ok(())
    }

    /// Bin index for a distance inside the range; the upper edge joins the last bin.
    pub fn bin_of(&self, distance: f64) -> usize {
        let idx = ((distance - self.distance_range[0]) / self.bin_width).floor();
        (idx.max(0.0) as usize).min(self.num_bins() - 1)
    }
}

/// One validated throw: initial pose, weights, and the distance it reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub theta_init: [f64; NUM_JOINTS],
    pub weights: Vec<f64>,
    pub target_distance: f64,
}

impl Sample {
    pub fn motion(&self) -> Motion {
        Motion {
            theta_init: self.theta_init,
            weights: self.weights.clone(),
        }
    }
}

/// Uniform candidate: pose inside the angle bands, weights in `weight_range`.
pub fn sample_candidate(
    rng: &mut Rng,
    limits: &JointLimits,
    num_primitives: usize,
    weight_range: [f64; 2],
) -> Motion {
    let theta_init =
        std::array::from_fn(|i| rng.random_range(limits.angle_min[i]..limits.angle_max[i]));
    let weights = (0..NUM_JOINTS * num_primitives)
        .map(|_| rng.random_range(weight_range[0]..weight_range[1]))
        .collect();
    Motion {
        theta_init,
        weights,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    DistanceOutOfRange,
    NoContactAtStart,
    JointLimit,
    VelocityLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validity {
    Valid(f64),
    Rejected(RejectReason),
}

/// Checks, in order: landing distance in range, contact at `t = 0`, limits.
pub fn validate(outcome: &ThrowOutcome, distance_range: [f64; 2]) -> Validity {
    let distance = match outcome.landing_x {
        Some(x) if outcome.released && x >= distance_range[0] && x <= distance_range[1] => x,
        _ => return Validity::Rejected(RejectReason::DistanceOutOfRange),
    };
    if !outcome.contact_at_start {
        return Validity::Rejected(RejectReason::NoContactAtStart);
    }
    if outcome.max_angle_violation > 0.0 {
        return Validity::Rejected(RejectReason::JointLimit);
    }
    if outcome.max_velocity_violation > 0.0 {
        return Validity::Rejected(RejectReason::VelocityLimit);
    }
    Validity::Valid(distance)
}

/// Per-bin counts of `samples` by target distance.
pub fn histogram(samples: &[Sample], cfg: &GenConfig) -> Vec<usize> {
    let mut counts = vec![0; cfg.num_bins()];
    for s in samples {
        counts[cfg.bin_of(s.target_distance)] += 1;
    }
    counts
}

/// Subsamples every occupied bin uniformly down to the smallest occupied-bin
/// count. Output is grouped by bin, preserving input order inside a bin.
pub fn balance(samples: &[Sample], cfg: &GenConfig, rng: &mut Rng) -> Result<Vec<Sample>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_bins()];
    for (i, s) in samples.iter().enumerate() {
        bins[cfg.bin_of(s.target_distance)].push(i);
    }
    let keep = bins
        .iter()
        .map(Vec::len)
        .filter(|&c| c > 0)
        .min()
        .expect("non-empty input occupies a bin");
    let mut out = Vec::with_capacity(keep * bins.len());
    for members in &bins {
        if members.is_empty() {
            continue;
        }
        let mut chosen = rand::seq::index::sample(rng, members.len(), keep).into_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|c| samples[members[c]].clone()));
    }
    Ok(out)
}

/// Rejection sampler for one joint's pose and weights against its limits.
struct JointSampler {
    num_primitives: usize,
    /// Row per grid step, `[φ_0..φ_{J-1}, φ̇_0..φ̇_{J-1}]`, visited mid-motion
    /// first since that is where limits are usually broken.
    rows: Vec<f64>,
}

impl JointSampler {
    fn new(basis: &PrimitiveBasis) -> Self {
        let j_count = basis.num_primitives();
        let n = basis.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| (2 * k).abs_diff(n));
        let rows = order
            .iter()
            .flat_map(|&k| {
                (0..j_count)
                    .map(move |j| basis.phi(j)[k])
                    .chain((0..j_count).map(move |j| basis.phi_dot(j)[k]))
            })
            .collect();
        JointSampler {
            num_primitives: j_count,
            rows,
        }
    }

    fn feasible(&self, theta0: f64, w: &[f64], joint: usize, limits: &JointLimits) -> bool {
        let j_count = self.num_primitives;
        let w = &w[..j_count];
        let (amin, amax) = (limits.angle_min[joint], limits.angle_max[joint]);
        let (vmin, vmax) = (limits.velocity_min[joint], limits.velocity_max[joint]);
        self.rows.chunks_exact(2 * j_count).all(|row| {
            let (p, d) = row.split_at(j_count);
            let mut a = theta0;
            let mut v = 0.0;
            for j in 0..j_count {
                a += w[j] * p[j];
                v += w[j] * d[j];
            }
            a >= amin && a <= amax && v >= vmin && v <= vmax
        })
    }

    /// Draws until the joint stays inside its limits; `None` after `max_trials`.
    fn draw(
        &self,
        rng: &mut Rng,
        joint: usize,
        limits: &JointLimits,
        weight_range: [f64; 2],
        max_trials: u64,
        trials: &mut u64,
        out: &mut [f64],
    ) -> Option<f64> {
        for _ in 0..max_trials {
            *trials += 1;
            let theta0 = rng.random_range(limits.angle_min[joint]..limits.angle_max[joint]);
            for w in out.iter_mut() {
                *w = rng.random_range(weight_range[0]..weight_range[1]);
            }
            if self.feasible(theta0, out, joint, limits) {
                return Some(theta0);
            }
        }
        None
    }
}

/// Counters reported by [`generate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub rounds: usize,
    /// Per-joint draws needed to obtain joint-feasible parameters.
    pub joint_trials: [u64; NUM_JOINTS],
    /// Joint-feasible candidates that were simulated.
    pub simulated: u64,
    pub valid_before_balance: usize,
    pub rejected_distance: u64,
    pub rejected_contact: u64,
    pub joint_acceptance: [f64; NUM_JOINTS],
    pub throw_acceptance: f64,
    /// Acceptance rate of plain whole-candidate rejection sampling implied by
    /// the stage rates.
    pub equivalent_acceptance: f64,
    pub histogram_before: Vec<usize>,
    pub histogram_after: Vec<usize>,
    pub balanced_count: usize,
}

#[derive(Default)]
struct ShardResult {
    samples: Vec<Sample>,
    joint_trials: [u64; NUM_JOINTS],
    simulated: u64,
    rejected_distance: u64,
    rejected_contact: u64,
    exhausted: bool,
}

fn run_shard(
    cfg: &GenConfig,
    sim: &SimConfig,
    basis: &PrimitiveBasis,
    sampler: &JointSampler,
    round: usize,
    shard: usize,
) -> Result<ShardResult> {
    let mut rng = rng::derive(cfg.rng_seed, &[rng::TAG_DATASET, round as u64, shard as u64]);
    let j_count = basis.num_primitives();
    let max_trials = cfg.probe_window.max(1) * 100;
    let mut res = ShardResult::default();
    let mut motion = Motion::zero([0.0; NUM_JOINTS], j_count);
    for _ in 0..cfg.candidates_per_shard {
        for joint in 0..NUM_JOINTS {
            let slot = &mut motion.weights[joint * j_count..(joint + 1) * j_count];
            match sampler.draw(
                &mut rng,
                joint,
                &sim.limits,
                cfg.weight_range,
                max_trials,
                &mut res.joint_trials[joint],
                slot,
            ) {
                Some(theta0) => motion.theta_init[joint] = theta0,
                None => {
                    res.exhausted = true;
                    return Ok(res);
                }
            }
        }
        res.simulated += 1;
        let series = decode(&motion, basis)?;
        let outcome = match simulate(&series, sim) {
            Ok(o) => o,
            Err(Error::NonFiniteState { .. }) => continue,
            Err(e) => return Err(e),
        };
        match validate(&outcome, cfg.distance_range) {
            Validity::Valid(distance) => res.samples.push(Sample {
                theta_init: motion.theta_init,
                weights: motion.weights.clone(),
                target_distance: distance,
            }),
            Validity::Rejected(RejectReason::DistanceOutOfRange) => res.rejected_distance += 1,
            Validity::Rejected(RejectReason::NoContactAtStart) => res.rejected_contact += 1,
            // Limits were enforced while sampling.
            Validity::Rejected(_) => unreachable!("joint-feasible candidate failed limits"),
        }
    }
    Ok(res)
}

fn done(samples: &[Sample], cfg: &GenConfig) -> bool {
    samples.len() >= cfg.target_count && histogram(samples, cfg).iter().all(|&c| c >= cfg.min_per_bin)
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Samples, simulates and validates candidates until the collection targets
/// are met, then levels the distance histogram.
pub fn generate(
    cfg: &GenConfig,
    sim: &SimConfig,
    basis: &PrimitiveBasis,
) -> Result<(Dataset, GenerationReport)> {
    cfg.validate()?;
    sim.validate()?;
    if (basis.dt() - sim.dt).abs() > 1e-12 {
        return Err(Error::InvalidConfig("basis and simulator time steps differ".into()));
    }
    let sampler = JointSampler::new(basis);
    let mut report = GenerationReport::default();
    let mut samples = Vec::new();
    let mut round = 0;
    while !done(&samples, cfg) {
        let shards: Vec<Result<ShardResult>> = (0..cfg.shards)
            .into_par_iter()
            .map(|s| run_shard(cfg, sim, basis, &sampler, round, s))
            .collect();
        let mut exhausted = false;
        for shard in shards {
            let shard = shard?;
            samples.extend(shard.samples);
            for i in 0..NUM_JOINTS {
                report.joint_trials[i] += shard.joint_trials[i];
            }
            report.simulated += shard.simulated;
            report.rejected_distance += shard.rejected_distance;
            report.rejected_contact += shard.rejected_contact;
            exhausted |= shard.exhausted;
        }
        round += 1;
        update_rates(&mut report, samples.len());

        let stage_rates = report
            .joint_acceptance
            .iter()
            .copied()
            .chain(std::iter::once(report.throw_acceptance));
        let probed = report.simulated >= cfg.probe_window || exhausted;
        if probed && (exhausted || stage_rates.clone().any(|r| r < cfg.min_acceptance)) {
            let worst = stage_rates.fold(f64::INFINITY, f64::min);
            return Err(Error::Timeout {
                rate: worst,
                candidates: report.simulated,
            });
        }
        if cfg.max_candidates > 0 && report.simulated >= cfg.max_candidates {
            break;
        }
    }
    report.rounds = round;
    report.valid_before_balance = samples.len();
    report.histogram_before = histogram(&samples, cfg);

    let mut rng = rng::derive(cfg.rng_seed, &[rng::TAG_BALANCE]);
    let balanced = balance(&samples, cfg, &mut rng)?;
    report.histogram_after = histogram(&balanced, cfg);
    report.balanced_count = balanced.len();
    let dataset = Dataset::new(basis.num_primitives(), DatasetMeta::from_configs(cfg, sim), balanced);
    Ok((dataset, report))
}

fn update_rates(report: &mut GenerationReport, valid: usize) {
    for i in 0..NUM_JOINTS {
        report.joint_acceptance[i] = rate(report.simulated, report.joint_trials[i]);
    }
    report.throw_acceptance = rate(valid as u64, report.simulated);
    report.equivalent_acceptance =
        report.joint_acceptance.iter().product::<f64>() * report.throw_acceptance;
}

/// Ranges used to normalize the features, stored in the dataset header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub angle_min: [f64; NUM_JOINTS],
    pub angle_max: [f64; NUM_JOINTS],
    pub weight_range: [f64; 2],
    pub distance_range: [f64; 2],
}

impl DatasetMeta {
    pub fn from_configs(gen: &GenConfig, sim: &SimConfig) -> Self {
        DatasetMeta {
            angle_min: sim.limits.angle_min,
            angle_max: sim.limits.angle_max,
            weight_range: gen.weight_range,
            distance_range: gen.distance_range,
        }
    }
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self::from_configs(&GenConfig::default(), &SimConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_primitives: usize,
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

const DATASET_MAGIC: &[u8; 4] = b"LTDS";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    pub fn new(num_primitives: usize, meta: DatasetMeta, samples: Vec<Sample>) -> Self {
        Dataset {
            num_primitives,
            meta,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Values per record: pose, weights, distance.
    pub fn record_len(&self) -> usize {
        NUM_JOINTS + NUM_JOINTS * self.num_primitives + 1
    }

    /// Layout: magic `LTDS`, `u32` version, `u64` count, `u32` J, then the
    /// normalization ranges (3 angle minima, 3 maxima, weight range, distance
    /// range; all `f64`), then `count` records of `4 + 3J` little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u64(self.samples.len() as u64);
        w.u32(self.num_primitives as u32);
        w.f64s(&self.meta.angle_min);
        w.f64s(&self.meta.angle_max);
        w.f64s(&self.meta.weight_range);
        w.f64s(&self.meta.distance_range);
        for s in &self.samples {
            w.f64s(&s.theta_init);
            w.f64s(&s.weights);
            w.f64(s.target_distance);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset file");
        r.expect_magic(DATASET_MAGIC)?;
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::format("dataset file", format!("unsupported version {version}")));
        }
        let count = r.u64()? as usize;
        let num_primitives = r.u32()? as usize;
        let v = r.f64s(10)?;
        let meta = DatasetMeta {
            angle_min: [v[0], v[1], v[2]],
            angle_max: [v[3], v[4], v[5]],
            weight_range: [v[6], v[7]],
            distance_range: [v[8], v[9]],
        };
        let rec = NUM_JOINTS + NUM_JOINTS * num_primitives + 1;
        if r.remaining() != count.saturating_mul(rec * 8) {
            return Err(Error::format(
                "dataset file",
                format!("header count {count} does not match {} payload bytes", r.remaining()),
            ));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let v = r.f64s(rec)?;
            samples.push(Sample {
                theta_init: [v[0], v[1], v[2]],
                weights: v[NUM_JOINTS..rec - 1].to_vec(),
                target_distance: v[rec - 1],
            });
        }
        r.finish()?;
        Ok(Dataset {
            num_primitives,
            meta,
            samples,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// CSV with header `th1,th2,th3,w00..w{3J-1},pg`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("th1,th2,th3");
        for i in 0..NUM_JOINTS * self.num_primitives {
            let _ = write!(out, ",w{i:02}");
        }
        out.push_str(",pg\n");
        for s in &self.samples {
            let _ = write!(out, "{:.17e},{:.17e},{:.17e}", s.theta_init[0], s.theta_init[1], s.theta_init[2]);
            for w in &s.weights {
                let _ = write!(out, ",{w:.17e}");
            }
            let _ = writeln!(out, ",{:.17e}", s.target_distance);
        }
        out
    }
}

//! Small-instance optimality checks for the mode translation and for DSES
//! with the saturated-L0 metric. Each check compares the engine against an
//! independent brute-force computation.

use std::collections::HashMap;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::benchgen::derive_seed;
use crate::engines::{dses, exhaustive_search, SearchConfig};
use crate::error::Result;
use crate::exec::Execution;
use crate::geometry::{EulerAngles, Point3, PointCloud, RigidTransform};
use crate::metrics::{count_inliers, ErrorMetric};
use crate::mode_search::{mode_translation, ModeResult};

/// One fixed-rotation translation problem.
#[derive(Debug, Clone)]
pub struct ModeInstance {
    pub source: PointCloud,
    pub reference: PointCloud,
    pub rotation: Matrix3<f64>,
    pub bin: f64,
}

/// Result of comparing the mode translation against a dense sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ModeOutcome {
    pub mode_count: usize,
    /// Inliers of the pose `(R, t*)` recounted from scratch.
    pub inliers_at_mode: usize,
    /// Best inlier count over the sweep lattice.
    pub sweep_best: usize,
    pub sweep_best_translation: [f64; 3],
    pub sweep_size: usize,
    /// Best inlier count over translations that are whole multiples of
    /// the bin size.
    pub grid_best: usize,
}

impl ModeOutcome {
    /// The mode beats every translation of the `bin / 4` sweep.
    pub fn holds(&self) -> bool {
        self.inliers_at_mode >= self.sweep_best
    }

    /// The mode beats every translation on the bin lattice itself.
    pub fn holds_on_grid(&self) -> bool {
        self.inliers_at_mode >= self.grid_best
    }
}

/// Samples `n` points in a cube of half-side `half`, rejecting any point
/// within Chebyshev distance `min_sep` of an earlier one.
pub(crate) fn separated_points(rng: &mut ChaCha8Rng, n: usize, half: f64, min_sep: f64) -> Vec<Point3> {
    let mut pts: Vec<Point3> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Point3::new(
            rng.random_range(-half..half),
            rng.random_range(-half..half),
            rng.random_range(-half..half),
        );
        if pts.iter().all(|q| (p - q).amax() > min_sep) {
            pts.push(p);
        }
    }
    pts
}

/// Inlier count of every translation on the lattice `(bin / subdiv) * k`
/// that captures at least one source point, computed by enumerating, per
/// source point, the lattice nodes inside the open box of half-width
/// `bin / 2` around each of its pair translations.
pub fn lattice_inlier_counts(inst: &ModeInstance, subdiv: u32) -> HashMap<[i64; 3], usize> {
    let step = inst.bin / subdiv as f64;
    let half = inst.bin / 2.0;
    let mut counts: HashMap<[i64; 3], usize> = HashMap::new();
    let mut covered = std::collections::HashSet::new();
    for x in &inst.source {
        covered.clear();
        let rx = inst.rotation * x;
        for y in &inst.reference {
            let c = y - rx;
            let range = |v: f64| {
                let lo = ((v - half) / step).floor() as i64;
                let hi = ((v + half) / step).ceil() as i64;
                lo..=hi
            };
            for i in range(c.x) {
                if (c.x - i as f64 * step).abs() >= half {
                    continue;
                }
                for j in range(c.y) {
                    if (c.y - j as f64 * step).abs() >= half {
                        continue;
                    }
                    for k in range(c.z) {
                        if (c.z - k as f64 * step).abs() < half {
                            covered.insert([i, j, k]);
                        }
                    }
                }
            }
        }
        for key in covered.drain() {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Draws a fixed-rotation instance: two independent uniform clouds of
/// 3 to 15 points in the unit cube, each with Chebyshev separations above
/// `bin`, and a uniform random rotation.
pub fn random_mode_instance(seed: u64, bin: f64) -> ModeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=15);
    let m = rng.random_range(3..=15);
    let source = separated_points(&mut rng, n, 0.5, bin);
    let reference = separated_points(&mut rng, m, 0.5, bin);
    ModeInstance {
        source: PointCloud::new(source).expect("sampled points are finite"),
        reference: PointCloud::new(reference).expect("sampled points are finite"),
        rotation: crate::benchgen::sample_rotation(180.0, derive_seed(seed, 1)),
        bin,
    }
}

/// Draws a fixed-rotation instance with planted correspondences: the
/// reference holds the rigidly moved source points (a random subset, each
/// perturbed by up to `bin / 8` per axis) plus uniform outliers, redrawn
/// until both clouds are separated by more than `bin`. The rotation is
/// the planted one.
pub fn planted_mode_instance(seed: u64, bin: f64) -> ModeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(3..=15);
        let m = rng.random_range(3..=15);
        let source = separated_points(&mut rng, n, 0.5, bin);
        let truth = RigidTransform::from_euler(
            EulerAngles::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        );
        let shared = rng.random_range(1..=n.min(m));
        let wiggle = bin / 8.0;
        let mut reference: Vec<Point3> = source[..shared]
            .iter()
            .map(|x| {
                truth.apply_point(x)
                    + Point3::new(
                        rng.random_range(-wiggle..wiggle),
                        rng.random_range(-wiggle..wiggle),
                        rng.random_range(-wiggle..wiggle),
                    )
            })
            .collect();
        while reference.len() < m {
            reference.push(truth.apply_point(&separated_points(&mut rng, 1, 0.5, 0.0)[0]));
        }
        let reference = PointCloud::new(reference).expect("sampled points are finite");
        if reference.is_separated(bin) {
            return ModeInstance {
                source: PointCloud::new(source).expect("sampled points are finite"),
                reference,
                rotation: *truth.rotation(),
                bin,
            };
        }
    }
}

/// Compares `mode_translation` against the `bin / 4` lattice sweep.
pub fn check_mode(inst: &ModeInstance) -> Result<ModeOutcome> {
    let mode: ModeResult = mode_translation(&inst.source, &inst.reference, &inst.rotation, inst.bin, None)?;
    let pose = RigidTransform::from_parts_unchecked(inst.rotation, mode.t_star, None);
    let inliers_at_mode = count_inliers(&inst.source, &inst.reference, &pose, inst.bin);
    let counts = lattice_inlier_counts(inst, 4);
    let step = inst.bin / 4.0;
    let (key, _) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("every source point covers some lattice node");
    let t = Point3::new(key[0] as f64, key[1] as f64, key[2] as f64) * step;
    // Recount the winning sweep translation with the library's own
    // inlier test, so both sides of the comparison use one definition.
    let sweep_pose = RigidTransform::from_parts_unchecked(inst.rotation, t, None);
    let sweep_best = count_inliers(&inst.source, &inst.reference, &sweep_pose, inst.bin);
    let grid_best = lattice_inlier_counts(inst, 1).into_values().max().unwrap_or(0);
    Ok(ModeOutcome {
        grid_best,
        mode_count: mode.count,
        inliers_at_mode,
        sweep_best,
        sweep_best_translation: [t.x, t.y, t.z],
        sweep_size: counts.len(),
    })
}

/// A registration problem whose true pose lies on both engines' grids.
#[derive(Debug, Clone)]
pub struct EngineInstance {
    pub source: PointCloud,
    pub reference: PointCloud,
    pub truth: RigidTransform,
    pub config: SearchConfig,
}

/// Outcome of the saturated-L0 comparison between the two engines.
#[derive(Debug, Clone, Serialize)]
pub struct EngineOutcome {
    pub dses_inliers: usize,
    pub exhaustive_inliers: usize,
    pub truth_inliers: usize,
}

impl EngineOutcome {
    pub fn holds(&self) -> bool {
        self.dses_inliers == self.exhaustive_inliers
    }
}

/// Rotation step of the engine-check instances (10 degrees).
const ENGINE_CHECK_ROT_STEP_DEG: f64 = 10.0;
/// Translation bin of the engine-check instances.
const ENGINE_CHECK_BIN: f64 = 0.1;

/// Draws a small instance (at most 12 points per cloud) whose true pose is
/// a node of a `K_rot = 1` rotation grid and of the translation grid. The
/// reference holds a random subset of the moved source points, perturbed
/// by less than a quarter bin, plus uniform outliers; both clouds are
/// separated by more than one bin.
pub fn engine_instance(seed: u64) -> EngineInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bin = ENGINE_CHECK_BIN;
    let step = ENGINE_CHECK_ROT_STEP_DEG.to_radians();
    let kt = 6u32;
    loop {
        let n = rng.random_range(4..=12);
        let m = rng.random_range(4..=12);
        let source = separated_points(&mut rng, n, 0.5, bin);
        let coord = |rng: &mut ChaCha8Rng| rng.random_range(-1i32..=1) as f64 * step;
        let angles = EulerAngles::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
        let shift = |rng: &mut ChaCha8Rng| rng.random_range(-(kt as i32) + 1..kt as i32) as f64 * bin;
        let truth = RigidTransform::from_euler(angles, Point3::new(shift(&mut rng), shift(&mut rng), shift(&mut rng)));
        let shared = rng.random_range(2..=n.min(m));
        let wiggle = bin / 4.0;
        let mut reference: Vec<Point3> = source[..shared]
            .iter()
            .map(|x| {
                truth.apply_point(x)
                    + Point3::new(
                        rng.random_range(-wiggle..wiggle),
                        rng.random_range(-wiggle..wiggle),
                        rng.random_range(-wiggle..wiggle),
                    )
            })
            .collect();
        while reference.len() < m {
            reference.push(truth.apply_point(&separated_points(&mut rng, 1, 0.5, 0.0)[0]));
        }
        let reference = PointCloud::new(reference).expect("sampled points are finite");
        if !reference.is_separated(bin) {
            continue;
        }
        let config = SearchConfig::new(1, step, kt, bin)
            .with_metric(ErrorMetric::SaturatedL0 { bin })
            .with_execution(Execution::Sequential);
        return EngineInstance {
            source: PointCloud::new(source).expect("sampled points are finite"),
            reference,
            truth,
            config,
        };
    }
}

/// Runs both engines with the saturated-L0 metric and compares inlier
/// counts; the exhaustive count is `N` minus its minimal error.
pub fn check_engine(inst: &EngineInstance) -> Result<EngineOutcome> {
    let semi = dses(&inst.source, &inst.reference, &inst.config)?;
    let full = exhaustive_search(&inst.source, &inst.reference, &inst.config)?;
    Ok(EngineOutcome {
        dses_inliers: semi.best_inliers,
        exhaustive_inliers: inst.source.len() - full.best_error.round() as usize,
        truth_inliers: count_inliers(&inst.source, &inst.reference, &inst.truth, inst.config.trans_bin),
    })
}

/// Aggregate of an oracle run.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub mode_trials: usize,
    /// Instances where a `bin / 4` sweep translation beats the mode.
    pub mode_sweep_violations: usize,
    /// Instances where a bin-lattice translation beats the mode.
    pub mode_lattice_violations: usize,
    pub planted_trials: usize,
    pub planted_sweep_violations: usize,
    pub engine_trials: usize,
    pub engine_violations: usize,
}

impl OracleReport {
    /// Whether the uniform sweep, lattice and engine checks all passed.
    /// The planted family is reported for reference only.
    pub fn all_hold(&self) -> bool {
        self.mode_sweep_violations == 0 && self.mode_lattice_violations == 0 && self.engine_violations == 0
    }
}

/// Bin size of the mode-check instances.
pub const MODE_CHECK_BIN: f64 = 0.1;

/// Runs `mode_trials` uniform and planted mode-check instances and
/// `engine_trials` engine-check instances; instance `k` of each family uses a
/// seed derived from `seed` and `k`.
pub fn run_oracle_suite(mode_trials: usize, engine_trials: usize, seed: u64) -> Result<OracleReport> {
    let mut report = OracleReport {
        mode_trials,
        mode_sweep_violations: 0,
        mode_lattice_violations: 0,
        planted_trials: mode_trials,
        planted_sweep_violations: 0,
        engine_trials,
        engine_violations: 0,
    };
    for k in 0..mode_trials as u64 {
        let outcome = check_mode(&random_mode_instance(derive_seed(seed, 3 * k), MODE_CHECK_BIN))?;
        report.mode_sweep_violations += !outcome.holds() as usize;
        report.mode_lattice_violations += !outcome.holds_on_grid() as usize;
        let planted = check_mode(&planted_mode_instance(derive_seed(seed, 3 * k + 1), MODE_CHECK_BIN))?;
        report.planted_sweep_violations += !planted.holds() as usize;
    }
    for k in 0..engine_trials as u64 {
        let outcome = check_engine(&engine_instance(derive_seed(seed, 3 * k + 2)))?;
        report.engine_violations += !outcome.holds() as usize;
    }
    Ok(report)
}

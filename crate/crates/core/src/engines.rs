//! Registration engines: pure exhaustive 6-D grid search and the
//! semi-exhaustive rotation search with per-rotation mode translations.
//!
//! Both engines minimize `sum_x min_y |y - R x - t|` under the configured
//! metric. Rotations are offsets `R_off` on an Euler grid applied on top of
//! an optional center pose (`R = R_off * R_center`); translations live on
//! the lattice `t_center + k * trans_bin`.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::geometry::{Point3, PointCloud, RigidTransform, RotationGrid};
use crate::metrics::{error_against_sorted, inliers_against_sorted, ErrorMetric, SortedCloud};
use crate::mode_search::{CountingMode, ModeScratch, ModeSearcher, TranslationBounds};

/// Default cap on the number of candidate poses an engine may visit.
pub const DEFAULT_MAX_POSES: u128 = 100_000_000;

/// Grid and objective settings shared by both engines.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Rotation grid half-width `K_rot` (steps per side).
    pub rot_half_width: u32,
    /// Rotation step in radians.
    pub rot_step: f64,
    /// Translation half-width in bins. `None` leaves the semi-exhaustive
    /// translation unbounded; the exhaustive engine requires a value.
    pub trans_half_width: Option<u32>,
    /// Translation bin size in meters.
    pub trans_bin: f64,
    /// Fraction of the best inlier count a candidate needs to be re-scored.
    pub q: f64,
    pub metric: ErrorMetric,
    /// Pose the grids are centered on.
    pub center: RigidTransform,
    pub counting: CountingMode,
    pub max_poses: u128,
    pub execution: Execution,
}

impl SearchConfig {
    /// Config with `q = 0.5`, identity center and a truncated-L1 metric at
    /// five translation bins.
    pub fn new(rot_half_width: u32, rot_step: f64, trans_half_width: u32, trans_bin: f64) -> Self {
        Self {
            rot_half_width,
            rot_step,
            trans_half_width: Some(trans_half_width),
            trans_bin,
            q: 0.5,
            metric: ErrorMetric::TruncatedL1 {
                threshold: 5.0 * trans_bin,
            },
            center: RigidTransform::identity(),
            counting: CountingMode::DistinctSources,
            max_poses: DEFAULT_MAX_POSES,
            execution: Execution::default(),
        }
    }

    /// Builds grids covering `+-rot_range` and `+-trans_range`, rounding the
    /// half-widths to the nearest whole step.
    pub fn from_ranges(rot_range: f64, rot_step: f64, trans_range: f64, trans_bin: f64) -> Self {
        let kr = (rot_range / rot_step).round().max(0.0) as u32;
        let kt = (trans_range / trans_bin).round().max(0.0) as u32;
        Self::new(kr, rot_step, kt, trans_bin)
    }

    pub fn with_metric(mut self, metric: ErrorMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_center(mut self, center: RigidTransform) -> Self {
        self.center = center;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rot_step > 0.0 && self.rot_step.is_finite()) {
            return Err(Error::InvalidConfig("rotation step must be positive".into()));
        }
        if !(self.trans_bin > 0.0 && self.trans_bin.is_finite()) {
            return Err(Error::InvalidConfig("translation bin must be positive".into()));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidConfig(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !self.metric.is_valid() {
            return Err(Error::InvalidConfig(format!("invalid metric {:?}", self.metric)));
        }
        Ok(())
    }

    fn bounds(&self) -> Option<TranslationBounds> {
        self.trans_half_width.map(|half_width| TranslationBounds {
            center: *self.center.translation(),
            half_width,
        })
    }

    fn centered_grid(&self) -> Result<(RotationGrid, Vec<Matrix3<f64>>)> {
        let grid = RotationGrid::build(self.rot_half_width, self.rot_step)?;
        let center = self.center.rotation();
        let rotations = grid.entries().iter().map(|e| e.matrix * center).collect();
        Ok((grid, rotations))
    }
}

/// A rotation with its mode translation and vote count.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseCandidate {
    pub transform: RigidTransform,
    pub inlier_count: usize,
    /// Set once the candidate has been re-scored under the search metric.
    pub refined_error: Option<f64>,
}

impl PoseCandidate {
    fn grid_index(&self) -> [i32; 3] {
        self.transform.grid_coords().unwrap_or([0; 3])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub mode: Duration,
    pub sort: Duration,
    pub refine: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Transform aligning the source onto the reference.
    pub best: RigidTransform,
    /// Objective value recomputed at `best`.
    pub best_error: f64,
    /// Source points with a reference point inside the translation bin at
    /// `best`, recounted from scratch.
    pub best_inliers: usize,
    /// Histogram vote count of the winning candidate (semi-exhaustive only).
    pub best_mode_count: Option<usize>,
    pub candidates_evaluated: usize,
    pub candidates_refined: usize,
    pub timings: PhaseTimings,
}

fn check_cap(poses: u128, cap: u128) -> Result<()> {
    if poses > cap {
        Err(Error::SearchTooLarge { poses, cap })
    } else {
        Ok(())
    }
}

fn finish(
    source: &PointCloud,
    sorted: &SortedCloud,
    cfg: &SearchConfig,
    best: RigidTransform,
) -> (f64, usize) {
    let error = error_against_sorted(source, sorted, best.rotation(), best.translation(), cfg.metric);
    let inliers = inliers_against_sorted(source, sorted, best.rotation(), best.translation(), cfg.trans_bin);
    (error, inliers)
}

/// Evaluates the objective at every node of the 6-D rotation x translation
/// grid and returns the minimizer. Ties go to the smallest rotation index,
/// then the smallest translation index.
pub fn exhaustive_search(
    source: &PointCloud,
    reference: &PointCloud,
    cfg: &SearchConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    let kt = cfg.trans_half_width.ok_or_else(|| {
        Error::InvalidConfig("exhaustive search needs a bounded translation grid".into())
    })?;
    let side_t = 2 * kt as u128 + 1;
    let poses = RotationGrid::size_for(cfg.rot_half_width) * side_t * side_t * side_t;
    check_cap(poses, cfg.max_poses)?;

    let start = Instant::now();
    let (grid, rotations) = cfg.centered_grid()?;
    let sorted = SortedCloud::new(reference);
    let t0 = *cfg.center.translation();
    let k = kt as i32;

    let per_rotation = map_indexed(
        cfg.execution,
        rotations.len(),
        || Vec::<Point3>::with_capacity(source.len()),
        |rotated, r| {
            rotated.clear();
            rotated.extend(source.iter().map(|x| rotations[r] * x));
            let mut best: Option<(f64, [i32; 3])> = None;
            for a in -k..=k {
                for b in -k..=k {
                    for c in -k..=k {
                        let t = t0 + Point3::new(a as f64, b as f64, c as f64) * cfg.trans_bin;
                        let bound = best.map_or(f64::INFINITY, |(e, _)| e);
                        let mut sum = 0.0;
                        for p in rotated.iter() {
                            sum += sorted.min_residual(&(p + t), cfg.metric);
                            // partial sums only grow, so a strictly larger
                            // prefix can neither win nor tie
                            if sum > bound {
                                break;
                            }
                        }
                        if sum < bound {
                            best = Some((sum, [a, b, c]));
                        }
                    }
                }
            }
            best.expect("translation grid is non-empty")
        },
    );

    let (r_best, (_, t_idx)) = per_rotation
        .iter()
        .enumerate()
        .fold(None::<(usize, (f64, [i32; 3]))>, |acc, (i, &cand)| match acc {
            Some((_, (e, _))) if cand.0 >= e => acc,
            _ => Some((i, cand)),
        })
        .expect("rotation grid is non-empty");

    let translation = t0
        + Point3::new(t_idx[0] as f64, t_idx[1] as f64, t_idx[2] as f64) * cfg.trans_bin;
    let best = RigidTransform::from_parts_unchecked(
        rotations[r_best],
        translation,
        Some(grid.entries()[r_best].index),
    );
    let (best_error, best_inliers) = finish(source, &sorted, cfg, best.clone());
    let total = start.elapsed();
    Ok(RegistrationResult {
        best,
        best_error,
        best_inliers,
        best_mode_count: None,
        candidates_evaluated: usize::try_from(poses).unwrap_or(usize::MAX),
        candidates_refined: 0,
        timings: PhaseTimings {
            mode: total,
            total,
            ..Default::default()
        },
    })
}

fn candidate_order(a: &PoseCandidate, b: &PoseCandidate) -> Ordering {
    b.inlier_count
        .cmp(&a.inlier_count)
        .then_with(|| a.grid_index().cmp(&b.grid_index()))
}

/// Phase 1 and 2 of the semi-exhaustive search: one candidate per grid
/// rotation that has any in-bounds translation, sorted by vote count
/// (descending) then grid index.
pub fn mode_candidates(
    source: &PointCloud,
    reference: &PointCloud,
    cfg: &SearchConfig,
) -> Result<(Vec<PoseCandidate>, PhaseTimings)> {
    cfg.validate()?;
    check_cap(RotationGrid::size_for(cfg.rot_half_width), cfg.max_poses)?;
    let start = Instant::now();
    let (grid, rotations) = cfg.centered_grid()?;
    let searcher = ModeSearcher::new(reference, cfg.trans_bin, cfg.bounds(), cfg.counting)?;
    let found = map_indexed(cfg.execution, rotations.len(), ModeScratch::default, |scratch, r| {
        searcher.search(source, &rotations[r], scratch).map(|m| PoseCandidate {
            transform: RigidTransform::from_parts_unchecked(
                rotations[r],
                m.t_star,
                Some(grid.entries()[r].index),
            ),
            inlier_count: m.count,
            refined_error: None,
        })
    });
    let mut candidates: Vec<PoseCandidate> = found.into_iter().flatten().collect();
    let mode = start.elapsed();
    let sort_start = Instant::now();
    candidates.sort_by(candidate_order);
    let timings = PhaseTimings {
        mode,
        sort: sort_start.elapsed(),
        ..Default::default()
    };
    Ok((candidates, timings))
}

/// Number of leading candidates with `count >= q * best_count`; at least
/// one whenever the list is non-empty.
pub fn refinement_prefix(candidates: &[PoseCandidate], q: f64) -> usize {
    let Some(first) = candidates.first() else {
        return 0;
    };
    let cutoff = q * first.inlier_count as f64;
    candidates
        .iter()
        .take_while(|c| c.inlier_count as f64 >= cutoff)
        .count()
        .max(1)
}

/// Scores the `M >= q * M*` prefix of `candidates` (sorted by count,
/// descending) under `metric`; the rest are left untouched.
pub fn refine_candidates(
    candidates: &mut [PoseCandidate],
    source: &PointCloud,
    reference: &PointCloud,
    metric: ErrorMetric,
    q: f64,
    execution: Execution,
) -> usize {
    let sorted = SortedCloud::new(reference);
    refine_sorted(candidates, source, &sorted, metric, q, execution)
}

fn refine_sorted(
    candidates: &mut [PoseCandidate],
    source: &PointCloud,
    sorted: &SortedCloud,
    metric: ErrorMetric,
    q: f64,
    execution: Execution,
) -> usize {
    let n = refinement_prefix(candidates, q);
    let prefix = &candidates[..n];
    let errors = map_indexed(execution, n, || (), |_, i| {
        let t = &prefix[i].transform;
        error_against_sorted(source, sorted, t.rotation(), t.translation(), metric)
    });
    for (c, e) in candidates[..n].iter_mut().zip(errors) {
        c.refined_error = Some(e);
    }
    n
}

/// Semi-exhaustive search: mode translation per grid rotation, then the
/// best `q` fraction (by vote count) re-scored under the configured metric.
///
/// With the saturated-L0 metric the vote count already is the objective, so
/// re-scoring is skipped and the top-voted candidate is returned.
pub fn dses(source: &PointCloud, reference: &PointCloud, cfg: &SearchConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    let (mut candidates, mut timings) = mode_candidates(source, reference, cfg)?;
    if candidates.is_empty() {
        return Err(Error::NoCandidate);
    }
    let sorted = SortedCloud::new(reference);
    let refine_start = Instant::now();
    let (winner, refined) = if matches!(cfg.metric, ErrorMetric::SaturatedL0 { .. }) {
        (0, 0)
    } else {
        let n = refine_sorted(&mut candidates, source, &sorted, cfg.metric, cfg.q, cfg.execution);
        let winner = (0..n)
            .min_by(|&a, &b| {
                let (ca, cb) = (&candidates[a], &candidates[b]);
                ca.refined_error
                    .unwrap()
                    .total_cmp(&cb.refined_error.unwrap())
                    .then_with(|| ca.grid_index().cmp(&cb.grid_index()))
            })
            .expect("at least one candidate refined");
        (winner, n)
    };
    timings.refine = refine_start.elapsed();
    let chosen = &candidates[winner];
    let best = chosen.transform.clone();
    let (best_error, best_inliers) = finish(source, &sorted, cfg, best.clone());
    timings.total = start.elapsed();
    Ok(RegistrationResult {
        best,
        best_error,
        best_inliers,
        best_mode_count: Some(chosen.inlier_count),
        candidates_evaluated: candidates.len(),
        candidates_refined: refined,
        timings,
    })
}

//! Residual norms, alignment error, inlier counting and pose-error metrics.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_geodesic_angle, wrap_angle, EulerAngles, Point3, PointCloud, RigidTransform};

/// Per-point residual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMetric {
    L2,
    L1,
    /// `min(|d|_1, threshold)`.
    TruncatedL1 { threshold: f64 },
    /// 0 when `|d|_inf < bin / 2`, else 1.
    SaturatedL0 { bin: f64 },
}

impl ErrorMetric {
    pub fn is_valid(&self) -> bool {
        match *self {
            ErrorMetric::L2 | ErrorMetric::L1 => true,
            ErrorMetric::TruncatedL1 { threshold } => threshold > 0.0 && threshold.is_finite(),
            ErrorMetric::SaturatedL0 { bin } => bin > 0.0 && bin.is_finite(),
        }
    }

    /// Upper bound on any residual, when the metric saturates.
    fn ceiling(&self) -> f64 {
        match *self {
            ErrorMetric::L2 | ErrorMetric::L1 => f64::INFINITY,
            ErrorMetric::TruncatedL1 { threshold } => threshold,
            ErrorMetric::SaturatedL0 { .. } => 1.0,
        }
    }
}

#[inline]
pub fn point_residual(metric: ErrorMetric, d: &Point3) -> f64 {
    match metric {
        ErrorMetric::L2 => d.norm(),
        ErrorMetric::L1 => d.x.abs() + d.y.abs() + d.z.abs(),
        ErrorMetric::TruncatedL1 { threshold } => (d.x.abs() + d.y.abs() + d.z.abs()).min(threshold),
        ErrorMetric::SaturatedL0 { bin } => {
            if d.amax() < bin / 2.0 {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// A reference cloud sorted along x for exact nearest-residual queries.
///
/// Every metric here is bounded below by `|dx|`, so a scan outward from the
/// query's x position can stop once `|dx|` exceeds the best residual so far.
/// The result equals the brute-force minimum over all points.
#[derive(Debug, Clone)]
pub(crate) struct SortedCloud {
    xs: Vec<f64>,
    pts: Vec<Point3>,
}

impl SortedCloud {
    pub(crate) fn new(cloud: &PointCloud) -> Self {
        let mut pts = cloud.points().to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self {
            xs: pts.iter().map(|p| p.x).collect(),
            pts,
        }
    }

    /// `min_y residual(y - p)`.
    pub(crate) fn min_residual(&self, p: &Point3, metric: ErrorMetric) -> f64 {
        if let ErrorMetric::SaturatedL0 { bin } = metric {
            return if self.has_within_chebyshev(p, bin / 2.0) { 0.0 } else { 1.0 };
        }
        let ceiling = metric.ceiling();
        let mut best = ceiling;
        let start = self.xs.partition_point(|&x| x < p.x);
        // slack covers the last-ulp rounding of sqrt for L2
        let limit = |best: f64| best * (1.0 + 1e-9);
        for k in start..self.pts.len() {
            if self.xs[k] - p.x > limit(best) {
                break;
            }
            best = best.min(point_residual(metric, &(self.pts[k] - p)));
        }
        for k in (0..start).rev() {
            if p.x - self.xs[k] > limit(best) {
                break;
            }
            best = best.min(point_residual(metric, &(self.pts[k] - p)));
        }
        best
    }

    /// Whether some reference point lies strictly within `radius` of `p`
    /// in every axis.
    pub(crate) fn has_within_chebyshev(&self, p: &Point3, radius: f64) -> bool {
        let lo = self.xs.partition_point(|&x| x <= p.x - radius);
        for k in lo..self.pts.len() {
            if self.xs[k] >= p.x + radius {
                break;
            }
            if (self.pts[k] - p).amax() < radius {
                return true;
            }
        }
        false
    }
}

/// `sum_{x in X} min_{y in Y} residual(y - (R x + t))`, summed in source
/// order.
pub fn alignment_error(
    source: &PointCloud,
    reference: &PointCloud,
    transform: &RigidTransform,
    metric: ErrorMetric,
) -> f64 {
    let sorted = SortedCloud::new(reference);
    error_against_sorted(source, &sorted, transform.rotation(), transform.translation(), metric)
}

pub(crate) fn error_against_sorted(
    source: &PointCloud,
    reference: &SortedCloud,
    rotation: &Matrix3<f64>,
    translation: &Point3,
    metric: ErrorMetric,
) -> f64 {
    source
        .iter()
        .map(|x| reference.min_residual(&(rotation * x + translation), metric))
        .sum()
}

/// Number of source points whose image has a reference point strictly
/// inside the axis-aligned box of half-width `bin / 2`.
pub fn count_inliers(
    source: &PointCloud,
    reference: &PointCloud,
    transform: &RigidTransform,
    bin: f64,
) -> usize {
    let sorted = SortedCloud::new(reference);
    inliers_against_sorted(source, &sorted, transform.rotation(), transform.translation(), bin)
}

pub(crate) fn inliers_against_sorted(
    source: &PointCloud,
    reference: &SortedCloud,
    rotation: &Matrix3<f64>,
    translation: &Point3,
    bin: f64,
) -> usize {
    source
        .iter()
        .filter(|x| reference.has_within_chebyshev(&(rotation * *x + translation), bin / 2.0))
        .count()
}

/// Symmetric mean nearest-neighbor Euclidean distance.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    let one_way = |from: &PointCloud, to: &PointCloud| {
        let sorted = SortedCloud::new(to);
        let total: f64 = from
            .iter()
            .map(|p| sorted.min_residual(p, ErrorMetric::L2))
            .sum();
        total / from.len() as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// Thresholds deciding whether a trial counts toward recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallThresholds {
    /// Degrees.
    pub mae_rotation: f64,
    /// Meters.
    pub mae_translation: f64,
}

impl Default for RecallThresholds {
    fn default() -> Self {
        Self {
            mae_rotation: 1.0,
            mae_translation: 0.1,
        }
    }
}

impl RecallThresholds {
    pub fn is_hit(&self, mae_r: f64, mae_t: f64) -> bool {
        mae_r < self.mae_rotation && mae_t < self.mae_translation
    }
}

/// Pose-error summary of a single registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Geodesic rotation error, degrees.
    pub mie_r: f64,
    /// Euclidean translation error, meters.
    pub mie_t: f64,
    /// Mean absolute Euler-angle error, degrees.
    pub mae_r: f64,
    /// Mean absolute translation-component error, meters.
    pub mae_t: f64,
    /// Chamfer distance after alignment, meters (0 when not computed).
    pub chamfer: f64,
    pub is_recall_hit: bool,
}

/// Compares a predicted pose against ground truth.
pub fn evaluate_pose(predicted: &RigidTransform, truth: &RigidTransform) -> EvalReport {
    let mie_r = rotation_geodesic_angle(truth.rotation(), predicted.rotation());
    let dt = predicted.translation() - truth.translation();
    let mie_t = dt.norm();
    let ep = EulerAngles::from_matrix(predicted.rotation());
    let eg = EulerAngles::from_matrix(truth.rotation());
    let mae_r = [ep.theta - eg.theta, ep.phi - eg.phi, ep.xi - eg.xi]
        .iter()
        .map(|d| wrap_angle(*d).abs().to_degrees())
        .sum::<f64>()
        / 3.0;
    let mae_t = (dt.x.abs() + dt.y.abs() + dt.z.abs()) / 3.0;
    EvalReport {
        mie_r,
        mie_t,
        mae_r,
        mae_t,
        chamfer: 0.0,
        is_recall_hit: RecallThresholds::default().is_hit(mae_r, mae_t),
    }
}

/// [`evaluate_pose`] plus the chamfer distance between the aligned source
/// and the reference.
pub fn evaluate_registration(
    predicted: &RigidTransform,
    truth: &RigidTransform,
    source: &PointCloud,
    reference: &PointCloud,
) -> EvalReport {
    let mut report = evaluate_pose(predicted, truth);
    report.chamfer = chamfer_distance(&predicted.apply(source), reference);
    report
}

//! Experiment orchestration: trial batches, the shared-frame rotation
//! study, runtime scaling, local registration fixtures and single-shot
//! registration of point-cloud files, with CSV and JSON reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::benchgen::{derive_seed, make_instance, sample_rotation, sample_transform, PoseRecord, ScenarioConfig, ScenarioInstance};
use crate::engines::{dses, exhaustive_search, RegistrationResult, SearchConfig, DEFAULT_MAX_POSES};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, RotationGrid};
use crate::io;
use crate::metrics::{chamfer_distance, evaluate_pose, ErrorMetric, EvalReport, RecallThresholds};

/// First line of every benchmark CSV.
pub const BATCH_CSV_HEADER: &str = "# dses benchmark csv v1";
/// First line of every scaling CSV.
pub const SCALING_CSV_HEADER: &str = "# dses scaling csv v1";

/// Seed streams used by the studies on top of a trial seed.
mod stream {
    pub const FRAME_ROTATION: u64 = 101;
    pub const PERTURBATION: u64 = 102;
}

/// Refinement metric names used in search files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "l1")]
    L1,
    #[default]
    #[serde(rename = "trunc-l1")]
    TruncatedL1,
    #[serde(rename = "inliers")]
    Inliers,
}

impl MetricName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "l1" => Ok(Self::L1),
            "trunc-l1" => Ok(Self::TruncatedL1),
            "inliers" => Ok(Self::Inliers),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric {other:?} (expected l2, l1, trunc-l1 or inliers)"
            ))),
        }
    }

    /// The metric for translation bin `bin`; the truncation threshold
    /// defaults to five bins.
    pub fn to_metric(self, bin: f64, threshold: Option<f64>) -> ErrorMetric {
        match self {
            Self::L2 => ErrorMetric::L2,
            Self::L1 => ErrorMetric::L1,
            Self::TruncatedL1 => ErrorMetric::TruncatedL1 {
                threshold: threshold.unwrap_or(5.0 * bin),
            },
            Self::Inliers => ErrorMetric::SaturatedL0 { bin },
        }
    }
}

/// Search settings as stored in a search file. Angles in degrees, lengths
/// in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub rot_range_deg: f64,
    pub rot_step_deg: f64,
    pub trans_range: f64,
    pub trans_bin: f64,
    pub q: f64,
    pub metric: MetricName,
    /// Truncation threshold of `trunc-l1`; five bins when absent.
    pub trunc_threshold: Option<f64>,
    /// Pose the grids are centered on; identity when absent.
    pub center: Option<PoseRecord>,
    pub recall: RecallThresholds,
    pub max_poses: u128,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            rot_range_deg: 45.0,
            rot_step_deg: 3.0,
            trans_range: 0.5,
            trans_bin: 0.025,
            q: 0.5,
            metric: MetricName::TruncatedL1,
            trunc_threshold: None,
            center: None,
            recall: RecallThresholds::default(),
            max_poses: DEFAULT_MAX_POSES,
        }
    }
}

impl SearchSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.to_config()?;
        Ok(spec)
    }

    /// Engine configuration; half-widths are the ranges divided by the
    /// steps, rounded to whole steps.
    pub fn to_config(&self) -> Result<SearchConfig> {
        let finite_non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_non_negative(self.rot_range_deg) || !finite_non_negative(self.trans_range) {
            return Err(Error::InvalidConfig("search ranges must be non-negative".into()));
        }
        let mut cfg = SearchConfig::from_ranges(
            self.rot_range_deg.to_radians(),
            self.rot_step_deg.to_radians(),
            self.trans_range,
            self.trans_bin,
        )
        .with_q(self.q)
        .with_metric(self.metric.to_metric(self.trans_bin, self.trunc_threshold));
        if let Some(center) = &self.center {
            cfg = cfg.with_center(center.to_transform()?);
        }
        cfg.max_poses = self.max_poses;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Short machine-readable failure code for an engine error.
pub fn failure_code(err: &Error) -> &'static str {
    match err {
        Error::NoCandidate => "no_candidate",
        Error::SearchTooLarge { .. } => "search_too_large",
        Error::GridWraps { .. } => "grid_wraps",
        Error::InvalidConfig(_) => "invalid_config",
        Error::EmptyCloud | Error::NonFinite { .. } => "invalid_cloud",
        Error::UnknownShape(_) => "unknown_shape",
        Error::Io { .. } | Error::Parse { .. } | Error::Json(_) => "io",
    }
}

/// Phase timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingsMs {
    pub mode: f64,
    pub sort: f64,
    pub refine: f64,
    pub total: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl From<&RegistrationResult> for TimingsMs {
    fn from(r: &RegistrationResult) -> Self {
        Self {
            mode: ms(r.timings.mode),
            sort: ms(r.timings.sort),
            refine: ms(r.timings.refine),
            total: ms(r.timings.total),
        }
    }
}

/// Outcome of one registration in a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub shape: String,
    /// `None` on success, otherwise the failure code.
    pub failure: Option<String>,
    pub eval: Option<EvalReport>,
    pub inliers: Option<usize>,
    pub mode_count: Option<usize>,
    pub candidates_evaluated: Option<usize>,
    pub candidates_refined: Option<usize>,
    pub timings_ms: Option<TimingsMs>,
}

impl TrialRecord {
    pub fn is_recall_hit(&self) -> bool {
        self.eval.is_some_and(|e| e.is_recall_hit)
    }
}

/// Aggregate statistics of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_trials: usize,
    pub n_failed: usize,
    pub mean_mie_r: Option<f64>,
    pub mean_mie_t: Option<f64>,
    pub mean_mae_r: Option<f64>,
    pub mean_mae_t: Option<f64>,
    pub median_mie_r: Option<f64>,
    /// Recall hits over all trials; failed trials count as misses.
    pub recall: f64,
    pub mean_wall_ms: Option<f64>,
    pub median_wall_ms: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median of `values`; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

impl BatchSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let evals: Vec<EvalReport> = records.iter().filter_map(|r| r.eval).collect();
        let field = |f: fn(&EvalReport) -> f64| -> Vec<f64> { evals.iter().map(f).filter(|v| v.is_finite()).collect() };
        let walls: Vec<f64> = records.iter().filter_map(|r| r.timings_ms.map(|t| t.total)).collect();
        let hits = records.iter().filter(|r| r.is_recall_hit()).count();
        Self {
            n_trials: records.len(),
            n_failed: records.iter().filter(|r| r.failure.is_some()).count(),
            mean_mie_r: mean(&field(|e| e.mie_r)),
            mean_mie_t: mean(&field(|e| e.mie_t)),
            mean_mae_r: mean(&field(|e| e.mae_r)),
            mean_mae_t: mean(&field(|e| e.mae_t)),
            median_mie_r: median(&field(|e| e.mie_r)),
            recall: if records.is_empty() { 0.0 } else { hits as f64 / records.len() as f64 },
            mean_wall_ms: mean(&walls),
            median_wall_ms: median(&walls),
        }
    }
}

/// Full record of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: ScenarioConfig,
    pub search: SearchSpec,
    pub base_seed: u64,
    pub summary: BatchSummary,
    pub trials: Vec<TrialRecord>,
}

/// Registers one instance and scores it against the instance's target
/// pose.
pub fn run_trial(
    instance: &ScenarioInstance,
    cfg: &SearchConfig,
    thresholds: &RecallThresholds,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let mut record = TrialRecord {
        trial,
        seed,
        shape: instance.config.shape.name(),
        failure: None,
        eval: None,
        inliers: None,
        mode_count: None,
        candidates_evaluated: None,
        candidates_refined: None,
        timings_ms: None,
    };
    match dses(&instance.source, &instance.reference, cfg) {
        Ok(result) => {
            let mut eval = evaluate_pose(&result.best, instance.target_pose());
            eval.is_recall_hit = thresholds.is_hit(eval.mae_r, eval.mae_t);
            eval.chamfer = chamfer_distance(&result.best.apply(&instance.source), &instance.reference);
            record.eval = Some(eval);
            record.inliers = Some(result.best_inliers);
            record.mode_count = result.best_mode_count;
            record.candidates_evaluated = Some(result.candidates_evaluated);
            record.candidates_refined = Some(result.candidates_refined);
            record.timings_ms = Some(TimingsMs::from(&result));
        }
        Err(err) => record.failure = Some(failure_code(&err).to_string()),
    }
    record
}

fn trial_scenario(scenario: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        rng_seed: seed,
        ..scenario.clone()
    }
}

/// Runs `n_trials` registrations; trial `k` uses seed `base_seed + k`.
/// Engine and generator errors become failure rows.
pub fn run_batch(scenario: &ScenarioConfig, search: &SearchSpec, n_trials: usize, base_seed: u64) -> Result<BatchReport> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("a batch needs at least one trial".into()));
    }
    scenario.validate()?;
    let cfg = search.to_config()?;
    let trials = (0..n_trials)
        .map(|k| {
            let seed = base_seed.wrapping_add(k as u64);
            match make_instance(&trial_scenario(scenario, seed)) {
                Ok(instance) => run_trial(&instance, &cfg, &search.recall, k, seed),
                Err(err) => failed_record(k, seed, scenario, &err),
            }
        })
        .collect::<Vec<_>>();
    Ok(BatchReport {
        scenario: scenario.clone(),
        search: search.clone(),
        base_seed,
        summary: BatchSummary::from_records(&trials),
        trials,
    })
}

fn failed_record(trial: usize, seed: u64, scenario: &ScenarioConfig, err: &Error) -> TrialRecord {
    TrialRecord {
        trial,
        seed,
        shape: scenario.shape.name(),
        failure: Some(failure_code(err).to_string()),
        eval: None,
        inliers: None,
        mode_count: None,
        candidates_evaluated: None,
        candidates_refined: None,
        timings_ms: None,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.9}")).unwrap_or_default()
}

/// CSV rendering of a batch: a version comment, a header row and one row
/// per trial. Failed trials leave numeric fields empty. Wall-clock columns
/// are included only when `with_timings` is set, so the default output is
/// reproducible byte for byte.
pub fn batch_csv(report: &BatchReport, with_timings: bool) -> String {
    let mut out = String::new();
    out.push_str(BATCH_CSV_HEADER);
    out.push('\n');
    out.push_str(
        "trial,seed,shape,status,mie_r_deg,mie_t,mae_r_deg,mae_t,chamfer,recall_hit,inliers,mode_count,candidates_evaluated,candidates_refined",
    );
    if with_timings {
        out.push_str(",mode_ms,sort_ms,refine_ms,total_ms");
    }
    out.push('\n');
    for r in &report.trials {
        let e = r.eval;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.shape,
            r.failure.as_deref().unwrap_or("ok"),
            opt_f(e.map(|e| e.mie_r)),
            opt_f(e.map(|e| e.mie_t)),
            opt_f(e.map(|e| e.mae_r)),
            opt_f(e.map(|e| e.mae_t)),
            opt_f(e.map(|e| e.chamfer)),
            r.is_recall_hit() as u8,
            opt(r.inliers),
            opt(r.mode_count),
            opt(r.candidates_evaluated),
            opt(r.candidates_refined),
        );
        if with_timings {
            let t = r.timings_ms;
            let _ = write!(
                out,
                ",{},{},{},{}",
                opt_f(t.map(|t| t.mode)),
                opt_f(t.map(|t| t.sort)),
                opt_f(t.map(|t| t.refine)),
                opt_f(t.map(|t| t.total)),
            );
        }
        out.push('\n');
    }
    out
}

/// Paired results of the shared-frame rotation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRotationReport {
    pub baseline: BatchReport,
    pub rotated: BatchReport,
    /// Row-major shared rotation applied in each trial.
    pub shared_rotations: Vec<[f64; 9]>,
    /// Rotated recall minus baseline recall.
    pub recall_difference: f64,
}

/// For each trial registers the instance and a copy in which both clouds
/// are rotated by one shared random rotation (axis uniform, angle uniform
/// in `[0, max_angle_deg]`); the copy's target pose is conjugated
/// accordingly.
pub fn run_frame_rotation_study(
    scenario: &ScenarioConfig,
    search: &SearchSpec,
    n_trials: usize,
    base_seed: u64,
    max_angle_deg: f64,
) -> Result<FrameRotationReport> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("a batch needs at least one trial".into()));
    }
    scenario.validate()?;
    let cfg = search.to_config()?;
    let mut baseline = Vec::with_capacity(n_trials);
    let mut rotated = Vec::with_capacity(n_trials);
    let mut shared_rotations = Vec::with_capacity(n_trials);
    for k in 0..n_trials {
        let seed = base_seed.wrapping_add(k as u64);
        let shared: Matrix3<f64> = sample_rotation(max_angle_deg, derive_seed(seed, stream::FRAME_ROTATION));
        shared_rotations.push(RigidTransform::from_parts_unchecked(shared, Point3::zeros(), None).rotation_row_major());
        match make_instance(&trial_scenario(scenario, seed)) {
            Ok(instance) => {
                baseline.push(run_trial(&instance, &cfg, &search.recall, k, seed));
                rotated.push(run_trial(&instance.rotate_frame(&shared), &cfg, &search.recall, k, seed));
            }
            Err(err) => {
                baseline.push(failed_record(k, seed, scenario, &err));
                rotated.push(failed_record(k, seed, scenario, &err));
            }
        }
    }
    let wrap = |trials: Vec<TrialRecord>| BatchReport {
        scenario: scenario.clone(),
        search: search.clone(),
        base_seed,
        summary: BatchSummary::from_records(&trials),
        trials,
    };
    let (baseline, rotated) = (wrap(baseline), wrap(rotated));
    Ok(FrameRotationReport {
        recall_difference: rotated.summary.recall - baseline.summary.recall,
        baseline,
        rotated,
        shared_rotations,
    })
}

/// Which search range a scaling row varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    Rotation,
    Translation,
}

/// One point of the runtime scaling study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub axis: ScalingAxis,
    pub rot_range_deg: f64,
    pub trans_range: f64,
    pub rotations: u128,
    /// Median wall time of the whole registration; `None` when the search
    /// was rejected (for example by the pose cap).
    pub median_total_ms: Option<f64>,
    /// Median wall time of the per-rotation mode phase.
    pub median_mode_ms: Option<f64>,
}

/// Median wall times of `repetitions` registrations of `instance`.
pub fn time_registration(
    instance: &ScenarioInstance,
    cfg: &SearchConfig,
    repetitions: usize,
) -> Result<(f64, f64)> {
    let mut total = Vec::new();
    let mut mode = Vec::new();
    for _ in 0..repetitions.max(1) {
        let r = dses(&instance.source, &instance.reference, cfg)?;
        total.push(ms(r.timings.total));
        mode.push(ms(r.timings.mode));
    }
    Ok((median(&total).unwrap_or(0.0), median(&mode).unwrap_or(0.0)))
}

/// Times registrations of one instance while sweeping the rotation range
/// (translation range from `base`) and then the translation range
/// (rotation range from `base`). Each point is the median of at least
/// three repetitions.
pub fn run_scaling_study(
    scenario: &ScenarioConfig,
    base: &SearchSpec,
    rot_ranges_deg: &[f64],
    trans_ranges: &[f64],
    seed: u64,
    repetitions: usize,
) -> Result<Vec<ScalingRow>> {
    if rot_ranges_deg.is_empty() && trans_ranges.is_empty() {
        return Err(Error::InvalidConfig("scaling needs at least one range".into()));
    }
    let instance = make_instance(&trial_scenario(scenario, seed))?;
    let points = rot_ranges_deg
        .iter()
        .map(|&r| (ScalingAxis::Rotation, r, base.trans_range))
        .chain(trans_ranges.iter().map(|&t| (ScalingAxis::Translation, base.rot_range_deg, t)));
    let mut rows = Vec::new();
    for (axis, rot_range_deg, trans_range) in points {
        let spec = SearchSpec {
            rot_range_deg,
            trans_range,
            ..base.clone()
        };
        let cfg = spec.to_config()?;
        let timed = time_registration(&instance, &cfg, repetitions.max(3)).ok();
        rows.push(ScalingRow {
            axis,
            rot_range_deg,
            trans_range,
            rotations: RotationGrid::size_for(cfg.rot_half_width),
            median_total_ms: timed.map(|t| t.0),
            median_mode_ms: timed.map(|t| t.1),
        });
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = format!("{SCALING_CSV_HEADER}\naxis,rot_range_deg,trans_range,rotations,median_total_ms,median_mode_ms\n");
    for r in rows {
        let axis = match r.axis {
            ScalingAxis::Rotation => "rotation",
            ScalingAxis::Translation => "translation",
        };
        let _ = writeln!(
            out,
            "{axis},{},{},{},{},{}",
            r.rot_range_deg,
            r.trans_range,
            r.rotations,
            opt_f(r.median_total_ms),
            opt_f(r.median_mode_ms)
        );
    }
    out
}

/// Result of registering from a perturbed initial guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrial {
    pub seed: u64,
    pub chamfer_before: f64,
    pub chamfer_after: f64,
    pub eval: EvalReport,
}

impl LocalTrial {
    /// The registration lowered the chamfer distance of the initial guess.
    pub fn improved(&self) -> bool {
        self.chamfer_after < self.chamfer_before
    }
}

/// Local registration fixture: the search is centered on an initial guess
/// that differs from the target pose by a rotation with Euler angles in
/// `+-perturb_rot_deg` and a translation in `+-perturb_trans` per axis.
/// Chamfer distances are measured with the guess and with the result.
pub fn run_local_trial(
    scenario: &ScenarioConfig,
    search: &SearchSpec,
    perturb_rot_deg: f64,
    perturb_trans: f64,
    seed: u64,
) -> Result<LocalTrial> {
    let instance = make_instance(&trial_scenario(scenario, seed))?;
    let truth = instance.target_pose();
    let offset = sample_transform(perturb_rot_deg, perturb_trans, derive_seed(seed, stream::PERTURBATION));
    // The grid node `R_off * R_guess` equals the true rotation when
    // `R_off` is the sampled offset rotation.
    let guess = RigidTransform::from_parts_unchecked(
        offset.rotation().transpose() * truth.rotation(),
        truth.translation() - offset.translation(),
        None,
    );
    let cfg = search.to_config()?.with_center(guess.clone());
    let result = dses(&instance.source, &instance.reference, &cfg)?;
    Ok(LocalTrial {
        seed,
        chamfer_before: chamfer_distance(&guess.apply(&instance.source), &instance.reference),
        chamfer_after: chamfer_distance(&result.best.apply(&instance.source), &instance.reference),
        eval: evaluate_pose(&result.best, truth),
    })
}

/// Summary of a single registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub engine: String,
    pub rotation: [f64; 9],
    pub euler_deg: [f64; 3],
    pub translation: [f64; 3],
    pub error: f64,
    pub inliers: usize,
    pub mode_count: Option<usize>,
    pub candidates_evaluated: usize,
    pub candidates_refined: usize,
    /// Chamfer distance with the grid center applied.
    pub chamfer_before: f64,
    pub chamfer_after: f64,
    pub timings_ms: TimingsMs,
}

impl RegisterReport {
    pub fn transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major(self.rotation, self.translation)
    }

    /// Human-readable multi-line rendering.
    pub fn to_text(&self) -> String {
        let [a, b, c] = self.euler_deg;
        let [x, y, z] = self.translation;
        let mut out = String::new();
        let _ = writeln!(out, "engine: {}", self.engine);
        let _ = writeln!(out, "euler_deg: {a:.6} {b:.6} {c:.6}");
        let _ = writeln!(out, "translation_m: {x:.6} {y:.6} {z:.6}");
        let _ = writeln!(out, "error: {:.9}", self.error);
        let _ = writeln!(out, "inliers: {}", self.inliers);
        let _ = writeln!(out, "chamfer_before: {:.9}", self.chamfer_before);
        let _ = writeln!(out, "chamfer_after: {:.9}", self.chamfer_after);
        let _ = writeln!(out, "candidates_evaluated: {}", self.candidates_evaluated);
        let _ = writeln!(out, "candidates_refined: {}", self.candidates_refined);
        let _ = writeln!(out, "time_ms: {:.3}", self.timings_ms.total);
        out
    }
}

/// Registers `source` onto `reference` with the semi-exhaustive engine, or
/// the exhaustive one when `exhaustive` is set.
pub fn register_clouds(
    source: &PointCloud,
    reference: &PointCloud,
    cfg: &SearchConfig,
    exhaustive: bool,
) -> Result<(RegistrationResult, RegisterReport)> {
    let result = if exhaustive {
        exhaustive_search(source, reference, cfg)?
    } else {
        dses(source, reference, cfg)?
    };
    let best = &result.best;
    let t = best.translation();
    let report = RegisterReport {
        engine: if exhaustive { "exhaustive" } else { "dses" }.to_string(),
        rotation: best.rotation_row_major(),
        euler_deg: best.euler().to_degrees().map(unsigned_zero),
        translation: [t.x, t.y, t.z].map(unsigned_zero),
        error: result.best_error,
        inliers: result.best_inliers,
        mode_count: result.best_mode_count,
        candidates_evaluated: result.candidates_evaluated,
        candidates_refined: result.candidates_refined,
        chamfer_before: chamfer_distance(&cfg.center.apply(source), reference),
        chamfer_after: chamfer_distance(&best.apply(source), reference),
        timings_ms: TimingsMs::from(&result),
    };
    Ok((result, report))
}

/// Maps `-0.0` to `0.0` so reports never print a signed zero.
fn unsigned_zero(v: f64) -> f64 {
    v + 0.0
}

/// Reads both clouds (XYZ or PLY) and registers them.
pub fn register_files(
    source_path: impl AsRef<Path>,
    reference_path: impl AsRef<Path>,
    cfg: &SearchConfig,
    exhaustive: bool,
) -> Result<(RegistrationResult, RegisterReport)> {
    let source = io::read_cloud(source_path)?;
    let reference = io::read_cloud(reference_path)?;
    register_clouds(&source, &reference, cfg, exhaustive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{make_instance_with_alignment, sample_grid_transform, ShapeSpec};

    fn small_scenario() -> ScenarioConfig {
        ScenarioConfig {
            shape: ShapeSpec::LBracket,
            points_reference: 96,
            points_source: 96,
            pool_points: Some(192),
            rot_range_deg: 6.0,
            trans_range: 0.1,
            ..ScenarioConfig::default()
        }
    }

    fn small_search() -> SearchSpec {
        SearchSpec {
            rot_range_deg: 9.0,
            rot_step_deg: 3.0,
            trans_range: 0.15,
            trans_bin: 0.05,
            recall: RecallThresholds {
                mae_rotation: 6.0,
                mae_translation: 0.1,
            },
            ..SearchSpec::default()
        }
    }

    #[test]
    fn noiseless_on_grid_trial_is_a_recall_hit_with_zero_error() {
        let scenario = ScenarioConfig {
            noise_sigma: 0.0,
            shared_sample: true,
            ..small_scenario()
        };
        let search = small_search();
        let cfg = search.to_config().unwrap();
        let alignment = sample_grid_transform(cfg.rot_step, 3, cfg.trans_bin, 3, 7);
        let instance = make_instance_with_alignment(&scenario, alignment).unwrap();
        let record = run_trial(&instance, &cfg, &search.recall, 0, 7);
        let eval = record.eval.unwrap();
        assert!(record.failure.is_none());
        assert!(eval.is_recall_hit);
        assert!(eval.mae_r < 1e-9 && eval.mae_t < 1e-9, "{eval:?}");
        let summary = BatchSummary::from_records(&[record]);
        assert_eq!(summary.recall, 1.0);
    }

    #[test]
    fn batches_are_reproducible_and_use_consecutive_seeds() {
        let a = run_batch(&small_scenario(), &small_search(), 3, 40).unwrap();
        let b = run_batch(&small_scenario(), &small_search(), 3, 40).unwrap();
        assert_eq!(batch_csv(&a, false), batch_csv(&b, false));
        let seeds: Vec<u64> = a.trials.iter().map(|t| t.seed).collect();
        assert_eq!(seeds, vec![40, 41, 42]);
        let hits = a.trials.iter().filter(|t| t.is_recall_hit()).count();
        assert_eq!(a.summary.recall, hits as f64 / 3.0);
    }

    #[test]
    fn engine_errors_become_failure_rows() {
        let search = SearchSpec {
            max_poses: 10,
            ..small_search()
        };
        let report = run_batch(&small_scenario(), &search, 2, 0).unwrap();
        assert_eq!(report.summary.n_failed, 2);
        assert_eq!(report.summary.recall, 0.0);
        let csv = batch_csv(&report, true);
        assert!(csv.starts_with(BATCH_CSV_HEADER));
        assert!(csv.contains(",search_too_large,"));
        assert!(!csv.to_lowercase().contains("nan"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("search_too_large"));
    }

    #[test]
    fn zero_shared_rotation_leaves_results_unchanged() {
        let study = run_frame_rotation_study(&small_scenario(), &small_search(), 2, 9, 0.0).unwrap();
        assert_eq!(batch_csv(&study.baseline, false), batch_csv(&study.rotated, false));
        assert_eq!(study.recall_difference, 0.0);
        assert_eq!(study.shared_rotations.len(), 2);
        assert_eq!(study.shared_rotations[0], [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_scaling_point_gives_one_row_and_capped_points_are_empty() {
        let rows = run_scaling_study(&small_scenario(), &small_search(), &[6.0], &[], 1, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rotations, 125);
        assert!(rows[0].median_total_ms.is_some());

        let capped = SearchSpec {
            max_poses: 100,
            ..small_search()
        };
        let rows = run_scaling_study(&small_scenario(), &capped, &[], &[0.15], 1, 3).unwrap();
        assert_eq!(rows[0].median_total_ms, None);
        let csv = scaling_csv(&rows);
        assert!(csv.starts_with(SCALING_CSV_HEADER));
        assert!(csv.lines().nth(2).unwrap().ends_with(",,"));
    }

    #[test]
    fn cloud_registered_to_itself_returns_identity() {
        let instance = make_instance(&small_scenario()).unwrap();
        let cfg = small_search().to_config().unwrap();
        let (result, report) = register_clouds(&instance.reference, &instance.reference, &cfg, false).unwrap();
        assert!(result.best.rotation().is_identity(0.0));
        assert_eq!(report.translation, [0.0; 3]);
        assert_eq!(report.chamfer_after, 0.0);
        assert!(report.to_text().contains("chamfer_after: 0.000000000"));
    }

    #[test]
    fn search_spec_round_trips_and_rejects_bad_metrics() {
        let spec = small_search();
        let json = serde_json::to_string(&spec).unwrap();
        let back: SearchSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let partial: SearchSpec = serde_json::from_str(r#"{"metric": "inliers", "rot_step_deg": 5}"#).unwrap();
        assert_eq!(partial.metric, MetricName::Inliers);
        assert_eq!(partial.trans_bin, 0.025);
        assert!(serde_json::from_str::<SearchSpec>(r#"{"metric": "l3"}"#).is_err());
        assert!(MetricName::parse("l3").is_err());
        assert!(matches!(
            MetricName::TruncatedL1.to_metric(0.02, None),
            ErrorMetric::TruncatedL1 { threshold } if (threshold - 0.1).abs() < 1e-15
        ));
    }

    #[test]
    fn local_trial_starts_from_a_worse_guess() {
        let scenario = ScenarioConfig {
            scale: 0.1,
            noise_sigma: 0.001,
            noise_clip: 0.005,
            rot_range_deg: 45.0,
            trans_range: 0.05,
            ..small_scenario()
        };
        let search = SearchSpec {
            rot_range_deg: 5.0,
            rot_step_deg: 1.0,
            trans_range: 0.016,
            trans_bin: 0.004,
            ..SearchSpec::default()
        };
        let trial = run_local_trial(&scenario, &search, 5.0, 0.016, 3).unwrap();
        assert!(trial.chamfer_before.is_finite() && trial.chamfer_after.is_finite());
        assert!(trial.improved(), "{trial:?}");
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}

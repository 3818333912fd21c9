//! Synthetic partial-to-full registration instances.
//!
//! An instance is built as: sample a surface pool, draw reference and
//! source samples from it independently, move the source by the inverse of
//! a random alignment pose, jitter both clouds with clipped Gaussian noise,
//! then crop the source with a random half-space.
//!
//! Pose convention: `ScenarioInstance::t_gt` maps the base sample onto the
//! (pre-noise) source; the pose a registration engine should return is its
//! inverse, [`ScenarioInstance::target_pose`], which maps the source onto
//! the reference.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EulerAngles, Point3, PointCloud, RigidTransform};
use crate::io;

/// Surface the samples are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Box,
    Cylinder,
    Torus,
    LBracket,
    RandomBlob { seed: u64 },
    /// Vertices of an XYZ or PLY file, resampled.
    File { path: PathBuf },
}

impl ShapeSpec {
    pub fn name(&self) -> String {
        match self {
            ShapeSpec::Box => "box".into(),
            ShapeSpec::Cylinder => "cylinder".into(),
            ShapeSpec::Torus => "torus".into(),
            ShapeSpec::LBracket => "l_bracket".into(),
            ShapeSpec::RandomBlob { seed } => format!("random_blob_{seed}"),
            ShapeSpec::File { path } => path.display().to_string(),
        }
    }

    /// Parses `box`, `cylinder`, `torus`, `l_bracket`, `random_blob[:SEED]`
    /// or `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "box" => ShapeSpec::Box,
            "cylinder" => ShapeSpec::Cylinder,
            "torus" => ShapeSpec::Torus,
            "l_bracket" | "l-bracket" => ShapeSpec::LBracket,
            "random_blob" | "random-blob" => ShapeSpec::RandomBlob { seed: 0 },
            _ => {
                if let Some(seed) = s
                    .strip_prefix("random_blob:")
                    .or_else(|| s.strip_prefix("random-blob:"))
                {
                    ShapeSpec::RandomBlob {
                        seed: seed.parse().map_err(|_| Error::UnknownShape(s.into()))?,
                    }
                } else if let Some(path) = s.strip_prefix("file:") {
                    ShapeSpec::File { path: path.into() }
                } else {
                    return Err(Error::UnknownShape(s.into()));
                }
            }
        })
    }
}

/// Parameters of one synthetic scenario. Angles in degrees, lengths in
/// meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub shape: ShapeSpec,
    pub points_reference: usize,
    pub points_source: usize,
    /// Size of the surface pool both clouds are subsampled from; `None`
    /// samples each cloud directly from the surface.
    pub pool_points: Option<usize>,
    pub rot_range_deg: f64,
    pub trans_range: f64,
    pub noise_sigma: f64,
    pub noise_clip: f64,
    pub keep_fraction: f64,
    /// Radius of the normalized shape.
    pub scale: f64,
    /// Use the same base sample for source and reference (diagnostic).
    pub shared_sample: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            shape: ShapeSpec::LBracket,
            points_reference: 1024,
            points_source: 1024,
            pool_points: Some(2048),
            rot_range_deg: 45.0,
            trans_range: 0.5,
            noise_sigma: 0.01,
            noise_clip: 0.05,
            keep_fraction: 0.7,
            scale: 1.0,
            shared_sample: false,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.points_reference == 0 || self.points_source == 0 {
            return bad("point counts must be positive");
        }
        if self.pool_points == Some(0) {
            return bad("pool size must be positive");
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad("keep_fraction must lie in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_clip >= 0.0) {
            return bad("noise parameters must be non-negative");
        }
        if !(self.rot_range_deg >= 0.0 && self.trans_range >= 0.0) {
            return bad("ranges must be non-negative");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive");
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Derives an independent sub-seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Area-weighted triangle soup.
struct TriangleMesh {
    triangles: Vec<[Point3; 3]>,
    cumulative: Vec<f64>,
}

impl TriangleMesh {
    fn new(triangles: Vec<[Point3; 3]>) -> Self {
        let mut acc = 0.0;
        let cumulative = triangles
            .iter()
            .map(|t| {
                acc += 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
                acc
            })
            .collect();
        Self {
            triangles,
            cumulative,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let total = *self.cumulative.last().expect("non-empty mesh");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.triangles.len() - 1);
        let [a, b, c] = self.triangles[k];
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
    }
}

fn quad(a: Point3, b: Point3, c: Point3, d: Point3) -> [[Point3; 3]; 2] {
    [[a, b, c], [a, c, d]]
}

fn box_mesh(lo: Point3, hi: Point3) -> Vec<[Point3; 3]> {
    let p = |x: bool, y: bool, z: bool| {
        Point3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let faces = [
        quad(p(false, false, false), p(true, false, false), p(true, true, false), p(false, true, false)),
        quad(p(false, false, true), p(true, false, true), p(true, true, true), p(false, true, true)),
        quad(p(false, false, false), p(true, false, false), p(true, false, true), p(false, false, true)),
        quad(p(false, true, false), p(true, true, false), p(true, true, true), p(false, true, true)),
        quad(p(false, false, false), p(false, true, false), p(false, true, true), p(false, false, true)),
        quad(p(true, false, false), p(true, true, false), p(true, true, true), p(true, false, true)),
    ];
    faces.into_iter().flatten().collect()
}

/// L-shaped profile in the xy plane extruded along z. Arms differ in
/// length and width so the shape has no rotational symmetry.
fn l_bracket_mesh() -> Vec<[Point3; 3]> {
    let outline = [(0.0, 0.0), (1.0, 0.0), (1.0, 0.3), (0.3, 0.3), (0.3, 0.7), (0.0, 0.7)];
    let depth = 0.4;
    let v = |(x, y): (f64, f64), z: f64| Point3::new(x, y, z);
    let mut tris = Vec::new();
    // caps: the L splits into two rectangles
    for z in [0.0, depth] {
        tris.extend(quad(v((0.0, 0.0), z), v((1.0, 0.0), z), v((1.0, 0.3), z), v((0.0, 0.3), z)));
        tris.extend(quad(v((0.0, 0.3), z), v((0.3, 0.3), z), v((0.3, 0.7), z), v((0.0, 0.7), z)));
    }
    for i in 0..outline.len() {
        let a = outline[i];
        let b = outline[(i + 1) % outline.len()];
        tris.extend(quad(v(a, 0.0), v(b, 0.0), v(b, depth), v(a, depth)));
    }
    tris
}

/// Star-shaped blob: a sphere whose radius is modulated by a few random
/// Gaussian bumps, tessellated on a latitude/longitude grid.
fn blob_mesh(seed: u64) -> Vec<[Point3; 3]> {
    let mut r = rng(derive_seed(seed, 0xB10B));
    let bumps: Vec<(Point3, f64, f64)> = (0..7)
        .map(|_| {
            let c = random_unit_vector(&mut r);
            (c, r.random_range(-0.25..0.45), r.random_range(0.08..0.4))
        })
        .collect();
    let radius = |d: &Point3| {
        1.0 + bumps
            .iter()
            .map(|(c, a, w)| a * (-(1.0 - d.dot(c)) / w).exp())
            .sum::<f64>()
    };
    let (n_lat, n_lon) = (40, 80);
    let vertex = |i: usize, j: usize| {
        let theta = PI * i as f64 / n_lat as f64;
        let phi = 2.0 * PI * j as f64 / n_lon as f64;
        let d = Point3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        d * radius(&d)
    };
    let mut tris = Vec::new();
    for i in 0..n_lat {
        for j in 0..n_lon {
            let (a, b, c, d) = (vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1));
            if i > 0 {
                tris.push([a, b, d]);
            }
            if i + 1 < n_lat {
                tris.push([b, c, d]);
            }
        }
    }
    tris
}

pub(crate) fn random_unit_vector(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

const CYLINDER_RADIUS: f64 = 0.4;
const CYLINDER_HEIGHT: f64 = 1.2;
const TORUS_MAJOR: f64 = 0.7;
const TORUS_MINOR: f64 = 0.25;

fn sample_cylinder(rng: &mut ChaCha8Rng) -> Point3 {
    let (r, h) = (CYLINDER_RADIUS, CYLINDER_HEIGHT);
    let side = 2.0 * PI * r * h;
    let cap = PI * r * r;
    let u = rng.random::<f64>() * (side + 2.0 * cap);
    let a = rng.random_range(0.0..2.0 * PI);
    if u < side {
        Point3::new(r * a.cos(), r * a.sin(), rng.random_range(-h / 2.0..h / 2.0))
    } else {
        let rr = r * rng.random::<f64>().sqrt();
        let z = if u < side + cap { -h / 2.0 } else { h / 2.0 };
        Point3::new(rr * a.cos(), rr * a.sin(), z)
    }
}

/// Rejection sampling on the `(u, v)` parameterization; the area element is
/// proportional to `R + r cos v`.
fn sample_torus(rng: &mut ChaCha8Rng) -> Point3 {
    let (big, small) = (TORUS_MAJOR, TORUS_MINOR);
    loop {
        let u = rng.random_range(0.0..2.0 * PI);
        let v = rng.random_range(0.0..2.0 * PI);
        let w = (big + small * v.cos()) / (big + small);
        if rng.random::<f64>() < w {
            let ring = big + small * v.cos();
            return Point3::new(ring * u.cos(), ring * u.sin(), small * v.sin());
        }
    }
}

/// Un-normalized surface samples.
fn sample_surface(shape: &ShapeSpec, n: usize, seed: u64) -> Result<Vec<Point3>> {
    let mut r = rng(seed);
    let from_mesh = |mesh: TriangleMesh, r: &mut ChaCha8Rng| (0..n).map(|_| mesh.sample(r)).collect();
    Ok(match shape {
        ShapeSpec::Box => from_mesh(
            TriangleMesh::new(box_mesh(Point3::new(-0.5, -0.3, -0.175), Point3::new(0.5, 0.3, 0.175))),
            &mut r,
        ),
        ShapeSpec::LBracket => from_mesh(TriangleMesh::new(l_bracket_mesh()), &mut r),
        ShapeSpec::RandomBlob { seed } => from_mesh(TriangleMesh::new(blob_mesh(*seed)), &mut r),
        ShapeSpec::Cylinder => (0..n).map(|_| sample_cylinder(&mut r)).collect(),
        ShapeSpec::Torus => (0..n).map(|_| sample_torus(&mut r)).collect(),
        ShapeSpec::File { path } => {
            let cloud = io::read_cloud(path)?;
            let pts = cloud.points();
            if n <= pts.len() {
                let mut picked = index::sample(&mut r, pts.len(), n).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| pts[i]).collect()
            } else {
                (0..n).map(|_| pts[r.random_range(0..pts.len())]).collect()
            }
        }
    })
}

/// Centering offset and scale mapping `points` into the unit ball with the
/// farthest point on the sphere.
fn normalization(points: &[Point3]) -> (Point3, f64) {
    let centroid = points.iter().sum::<Point3>() / points.len() as f64;
    let radius = points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    (centroid, if radius > 0.0 { 1.0 / radius } else { 1.0 })
}

fn normalized(points: &[Point3], (centroid, scale): (Point3, f64), radius: f64) -> Result<PointCloud> {
    PointCloud::new(points.iter().map(|p| (p - centroid) * (scale * radius)).collect())
}

/// `n` area-uniform surface samples, centered at their centroid and scaled
/// so the farthest point has norm 1.
pub fn sample_shape(shape: &ShapeSpec, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let raw = sample_surface(shape, n, seed)?;
    normalized(&raw, normalization(&raw), 1.0)
}

/// Uniform Euler angles in `+-rot_range_deg`, uniform translation
/// components in `+-trans_range`.
pub fn sample_transform(rot_range_deg: f64, trans_range: f64, seed: u64) -> RigidTransform {
    let mut r = rng(seed);
    let a = rot_range_deg.to_radians().max(0.0);
    let t = trans_range.max(0.0);
    let angles = EulerAngles::new(
        r.random_range(-a..=a),
        r.random_range(-a..=a),
        r.random_range(-a..=a),
    );
    let translation = Point3::new(
        r.random_range(-t..=t),
        r.random_range(-t..=t),
        r.random_range(-t..=t),
    );
    RigidTransform::from_euler(angles, translation)
}

/// Rotation about a uniformly random axis by an angle uniform in
/// `[0, max_angle_deg]`.
pub fn sample_rotation(max_angle_deg: f64, seed: u64) -> Matrix3<f64> {
    if max_angle_deg <= 0.0 {
        return Matrix3::identity();
    }
    let mut r = rng(seed);
    let axis = nalgebra::Unit::new_normalize(random_unit_vector(&mut r));
    let angle = r.random_range(0.0..=max_angle_deg.to_radians());
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// Adds per-axis `N(0, sigma)` noise clamped to `+-clip`.
pub fn jitter(cloud: &PointCloud, sigma: f64, clip: f64, seed: u64) -> PointCloud {
    if sigma <= 0.0 || clip <= 0.0 {
        return cloud.clone();
    }
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut noise = || normal.sample(&mut r).clamp(-clip, clip);
    let points = cloud
        .iter()
        .map(|p| p + Point3::new(noise(), noise(), noise()))
        .collect();
    PointCloud::new(points).expect("jitter keeps points finite")
}

/// Number of points a crop keeps: `round(keep_fraction * n)`, halves
/// rounding up, at least one.
pub fn crop_count(n: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * n as f64 + 0.5).floor() as usize).clamp(1, n)
}

/// Keeps the [`crop_count`] points with the smallest projection onto a
/// uniformly random direction. Survivors keep their input order; equal
/// projections are resolved by index.
pub fn halfspace_crop(cloud: &PointCloud, keep_fraction: f64, seed: u64) -> PointCloud {
    let n = cloud.len();
    let k = crop_count(n, keep_fraction);
    if k == n {
        return cloud.clone();
    }
    let mut r = rng(seed);
    let dir = random_unit_vector(&mut r);
    let proj: Vec<f64> = cloud.iter().map(|p| p.dot(&dir)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let mut keep = vec![false; n];
    for &i in &order[..k] {
        keep[i] = true;
    }
    let points = cloud
        .iter()
        .zip(&keep)
        .filter(|(_, &kept)| kept)
        .map(|(p, _)| *p)
        .collect();
    PointCloud::new(points).expect("at least one point kept")
}

/// A generated registration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance {
    pub source: PointCloud,
    pub reference: PointCloud,
    /// Maps the base sample onto the source (before noise and cropping).
    pub t_gt: RigidTransform,
    alignment: RigidTransform,
    pub config: ScenarioConfig,
}

impl ScenarioInstance {
    /// The pose aligning the source onto the reference, `t_gt^-1`.
    pub fn target_pose(&self) -> &RigidTransform {
        &self.alignment
    }

    /// Re-expresses the instance in a frame rotated by `r`: both clouds are
    /// rotated and the poses conjugated.
    pub fn rotate_frame(&self, r: &Matrix3<f64>) -> Self {
        let frame = RigidTransform::from_parts_unchecked(*r, Point3::zeros(), None);
        Self {
            source: frame.apply(&self.source),
            reference: frame.apply(&self.reference),
            t_gt: self.t_gt.conjugate_by(r),
            alignment: self.alignment.conjugate_by(r),
            config: self.config.clone(),
        }
    }

    /// Writes `<prefix>_source.xyz`, `<prefix>_reference.xyz` and
    /// `<prefix>_pose.json`.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
        let prefix = prefix.as_ref().to_string_lossy().into_owned();
        let src = PathBuf::from(format!("{prefix}_source.xyz"));
        let refp = PathBuf::from(format!("{prefix}_reference.xyz"));
        let pose = PathBuf::from(format!("{prefix}_pose.json"));
        io::write_xyz(&src, &self.source)?;
        io::write_xyz(&refp, &self.reference)?;
        let sidecar = InstanceSidecar {
            t_gt: PoseRecord::from(&self.t_gt),
            target_pose: PoseRecord::from(&self.alignment),
            config: self.config.clone(),
        };
        let text = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&pose, text + "\n").map_err(|e| Error::io(&pose, e))?;
        Ok([src, refp, pose])
    }
}

/// JSON form of a rigid transform: row-major rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        let tr = t.translation();
        Self {
            rotation: t.rotation_row_major(),
            translation: [tr.x, tr.y, tr.z],
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major(self.rotation, self.translation)
    }

    /// Reads a pose file; a full instance sidecar yields its target pose,
    /// the transform that registers its source onto its reference.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let record = match value.get("target_pose") {
            Some(inner) => serde_json::from_value(inner.clone())?,
            None => serde_json::from_value(value)?,
        };
        Ok(record)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub t_gt: PoseRecord,
    pub target_pose: PoseRecord,
    pub config: ScenarioConfig,
}

mod stream {
    pub const TRANSFORM: u64 = 1;
    pub const POOL: u64 = 2;
    pub const REFERENCE: u64 = 3;
    pub const SOURCE: u64 = 4;
    pub const JITTER_REFERENCE: u64 = 5;
    pub const JITTER_SOURCE: u64 = 6;
    pub const CROP: u64 = 7;
}

fn subsample(pool: &[Point3], n: usize, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    if n <= pool.len() {
        let mut picked = index::sample(&mut r, pool.len(), n).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pool[i]).collect()
    } else {
        (0..n).map(|_| pool[r.random_range(0..pool.len())]).collect()
    }
}

/// Generates the instance fully determined by `cfg` (including its seed).
pub fn make_instance(cfg: &ScenarioConfig) -> Result<ScenarioInstance> {
    let alignment = sample_transform(cfg.rot_range_deg, cfg.trans_range, derive_seed(cfg.rng_seed, stream::TRANSFORM));
    make_instance_with_alignment(cfg, alignment)
}

/// A pose whose Euler angles are whole multiples of `rot_step` (radians)
/// within `+-rot_half_width` steps and whose translation components are
/// whole multiples of `trans_bin` within `+-trans_half_width` bins, drawn
/// uniformly. The angles are computed exactly as the rotation grid
/// computes its nodes.
pub fn sample_grid_transform(
    rot_step: f64,
    rot_half_width: u32,
    trans_bin: f64,
    trans_half_width: u32,
    seed: u64,
) -> RigidTransform {
    let mut r = rng(seed);
    let kr = rot_half_width as i32;
    let kt = trans_half_width as i32;
    let mut angle = || r.random_range(-kr..=kr) as f64 * rot_step;
    let angles = EulerAngles::new(angle(), angle(), angle());
    let mut shift = || r.random_range(-kt..=kt) as f64 * trans_bin;
    let translation = Point3::new(shift(), shift(), shift());
    RigidTransform::from_euler(angles, translation)
}

/// Same pipeline as [`make_instance`] with a caller-chosen alignment pose
/// in place of the sampled one.
pub fn make_instance_with_alignment(cfg: &ScenarioConfig, alignment: RigidTransform) -> Result<ScenarioInstance> {
    cfg.validate()?;
    let seed = cfg.rng_seed;
    let t_gt = alignment.inverse();

    let (reference_base, source_base, norm) = match cfg.pool_points {
        Some(pool_n) => {
            let pool = sample_surface(&cfg.shape, pool_n, derive_seed(seed, stream::POOL))?;
            let norm = normalization(&pool);
            let reference = subsample(&pool, cfg.points_reference, derive_seed(seed, stream::REFERENCE));
            let source = if cfg.shared_sample {
                reference.clone()
            } else {
                subsample(&pool, cfg.points_source, derive_seed(seed, stream::SOURCE))
            };
            (reference, source, norm)
        }
        None => {
            let reference = sample_surface(&cfg.shape, cfg.points_reference, derive_seed(seed, stream::REFERENCE))?;
            let norm = normalization(&reference);
            let source = if cfg.shared_sample {
                reference.clone()
            } else {
                sample_surface(&cfg.shape, cfg.points_source, derive_seed(seed, stream::SOURCE))?
            };
            (reference, source, norm)
        }
    };
    let reference_base = normalized(&reference_base, norm, cfg.scale)?;
    let source_base = normalized(&source_base, norm, cfg.scale)?;

    let reference = jitter(&reference_base, cfg.noise_sigma, cfg.noise_clip, derive_seed(seed, stream::JITTER_REFERENCE));
    let moved = t_gt.apply(&source_base);
    let source = halfspace_crop(
        &jitter(&moved, cfg.noise_sigma, cfg.noise_clip, derive_seed(seed, stream::JITTER_SOURCE)),
        cfg.keep_fraction,
        derive_seed(seed, stream::CROP),
    );
    Ok(ScenarioInstance {
        source,
        reference,
        t_gt,
        alignment,
        config: cfg.clone(),
    })
}

//! Point clouds, rigid transforms and Euler-angle rotation grids.
//!
//! Rotations are parameterized by extrinsic X-then-Y-then-Z Euler angles,
//! `R = Rz(xi) * Ry(phi) * Rx(theta)`. Angles are radians throughout the
//! library; only the command line speaks degrees.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point (or displacement) in meters.
pub type Point3 = Vector3<f64>;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// An ordered, non-empty list of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn centroid(&self) -> Point3 {
        self.points.iter().sum::<Point3>() / self.points.len() as f64
    }

    /// Smallest Chebyshev (per-axis max) distance between two distinct
    /// points, or `None` for a single-point cloud.
    pub fn min_chebyshev_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let d = (a - b).amax();
                best = Some(best.map_or(d, |m: f64| m.min(d)));
            }
        }
        best
    }

    /// True when no two points lie within `delta` of each other under the
    /// Chebyshev metric.
    pub fn is_separated(&self, delta: f64) -> bool {
        self.min_chebyshev_separation().is_none_or(|d| d > delta)
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Extrinsic XYZ Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub theta: f64,
    pub phi: f64,
    pub xi: f64,
}

impl EulerAngles {
    pub const fn new(theta: f64, phi: f64, xi: f64) -> Self {
        Self { theta, phi, xi }
    }

    pub fn from_degrees(theta: f64, phi: f64, xi: f64) -> Self {
        Self::new(theta.to_radians(), phi.to_radians(), xi.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [
            self.theta.to_degrees(),
            self.phi.to_degrees(),
            self.xi.to_degrees(),
        ]
    }

    pub fn to_matrix(self) -> Matrix3<f64> {
        rotation_from_euler(self)
    }

    /// Decomposes a rotation matrix into the extrinsic XYZ convention.
    ///
    /// `phi` lands in `[-pi/2, pi/2]`. At gimbal lock (`|phi| = pi/2`) the
    /// split between `theta` and `xi` is ambiguous and `xi` is set to zero.
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        let s = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let phi = s.asin();
        if s.abs() < 1.0 - 1e-12 {
            let theta = r[(2, 1)].atan2(r[(2, 2)]);
            let xi = r[(1, 0)].atan2(r[(0, 0)]);
            Self { theta, phi, xi }
        } else {
            // R = Rz(xi) Ry(+-pi/2) Rx(theta) only fixes theta -+ xi.
            let theta = if s > 0.0 {
                r[(0, 1)].atan2(r[(1, 1)])
            } else {
                (-r[(0, 1)]).atan2(r[(1, 1)])
            };
            Self {
                theta,
                phi,
                xi: 0.0,
            }
        }
    }
}

/// Wraps an angle to `[-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI && a > 0.0 {
        w = PI;
    }
    w
}

/// `Rz(xi) * Ry(phi) * Rx(theta)`.
pub fn rotation_from_euler(angles: EulerAngles) -> Matrix3<f64> {
    let (st, ct) = angles.theta.sin_cos();
    let (sp, cp) = angles.phi.sin_cos();
    let (sx, cx) = angles.xi.sin_cos();
    Matrix3::new(
        cx * cp,
        cx * sp * st - sx * ct,
        cx * sp * ct + sx * st,
        sx * cp,
        sx * sp * st + cx * ct,
        sx * sp * ct - cx * st,
        -sp,
        cp * st,
        cp * ct,
    )
}

/// Geodesic distance between two rotations, in degrees within `[0, 180]`.
pub fn rotation_geodesic_angle(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let c = ((ra.transpose() * rb).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let residual = r.transpose() * r - Matrix3::identity();
    residual.amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// A rigid transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Point3,
    grid_coords: Option<[i32; 3]>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Point3) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOLERANCE) {
            return Err(Error::InvalidConfig(
                "rotation matrix is not orthonormal with determinant +1".into(),
            ));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
            grid_coords: None,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Point3::zeros(),
            grid_coords: None,
        }
    }

    pub fn from_euler(angles: EulerAngles, translation: Point3) -> Self {
        Self {
            rotation: rotation_from_euler(angles),
            translation,
            grid_coords: None,
        }
    }

    /// Builds a transform from a row-major 3x3 rotation and a translation.
    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(&rotation),
            Point3::new(translation[0], translation[1], translation[2]),
        )
    }

    pub(crate) fn from_parts_unchecked(
        rotation: Matrix3<f64>,
        translation: Point3,
        grid_coords: Option<[i32; 3]>,
    ) -> Self {
        Self {
            rotation,
            translation,
            grid_coords,
        }
    }

    pub fn with_grid_coords(mut self, coords: [i32; 3]) -> Self {
        self.grid_coords = Some(coords);
        self
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Point3 {
        &self.translation
    }

    pub fn grid_coords(&self) -> Option<[i32; 3]> {
        self.grid_coords
    }

    pub fn euler(&self) -> EulerAngles {
        EulerAngles::from_matrix(&self.rotation)
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    #[inline]
    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Maps every point of `cloud`; order is preserved.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.iter().map(|p| self.apply_point(p)).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            translation: -(rt * self.translation),
            rotation: rt,
            grid_coords: None,
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            grid_coords: None,
        }
    }

    /// Expresses this transform in a frame rotated by `r`: `r * T * r^T`.
    pub fn conjugate_by(&self, r: &Matrix3<f64>) -> Self {
        Self {
            rotation: r * self.rotation * r.transpose(),
            translation: r * self.translation,
            grid_coords: None,
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// One node of a [`RotationGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridRotation {
    pub index: [i32; 3],
    pub angles: EulerAngles,
    pub matrix: Matrix3<f64>,
}

/// All `(2K+1)^3` Euler triples `{-K..K} * step`, materialized in
/// lexicographic `(theta, phi, xi)` index order.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationGrid {
    half_width: u32,
    step: f64,
    entries: Vec<GridRotation>,
}

impl RotationGrid {
    pub fn build(half_width: u32, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rotation step must be positive, got {step}"
            )));
        }
        if half_width as f64 * step > PI + 1e-12 {
            return Err(Error::GridWraps { half_width, step });
        }
        let k = half_width as i32;
        let side = (2 * half_width + 1) as usize;
        let mut entries = Vec::with_capacity(side * side * side);
        for a in -k..=k {
            for b in -k..=k {
                for c in -k..=k {
                    let angles =
                        EulerAngles::new(a as f64 * step, b as f64 * step, c as f64 * step);
                    entries.push(GridRotation {
                        index: [a, b, c],
                        angles,
                        matrix: rotation_from_euler(angles),
                    });
                }
            }
        }
        Ok(Self {
            half_width,
            step,
            entries,
        })
    }

    /// Number of rotations for half-width `k` without building the grid.
    pub fn size_for(half_width: u32) -> u128 {
        let side = 2 * half_width as u128 + 1;
        side * side * side
    }

    pub fn half_width(&self) -> u32 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GridRotation] {
        &self.entries
    }

    pub fn identity_index(&self) -> usize {
        self.entries.len() / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axis_rotation(axis: usize, a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        match axis {
            0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            _ => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        }
    }

    // Angle of a rotation through its unit quaternion, independent of the
    // trace formula.
    fn quaternion_angle_deg(r: &Matrix3<f64>) -> f64 {
        let q = nalgebra::UnitQuaternion::from_matrix(r);
        2.0 * q.w.abs().clamp(0.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn euler_zero_is_identity() {
        assert_eq!(
            rotation_from_euler(EulerAngles::default()),
            Matrix3::identity()
        );
    }

    #[test]
    fn quarter_turn_about_x_maps_y_to_z() {
        let r = rotation_from_euler(EulerAngles::new(PI / 2.0, 0.0, 0.0));
        let v = r * Point3::new(0.0, 1.0, 0.0);
        assert!((v - Point3::new(0.0, 0.0, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn euler_matches_axis_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = EulerAngles::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            );
            let r = rotation_from_euler(a);
            let direct = axis_rotation(2, a.xi) * axis_rotation(1, a.phi) * axis_rotation(0, a.theta);
            assert!((r - direct).amax() < 1e-12);
            assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_decomposition_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let a = EulerAngles::new(
                rng.random_range(-PI..PI),
                rng.random_range(-1.5..1.5),
                rng.random_range(-PI..PI),
            );
            let b = EulerAngles::from_matrix(&a.to_matrix());
            assert!((a.theta - b.theta).abs() < 1e-9);
            assert!((a.phi - b.phi).abs() < 1e-9);
            assert!((a.xi - b.xi).abs() < 1e-9);
        }
        // gimbal lock still reproduces the matrix
        for phi in [PI / 2.0, -PI / 2.0] {
            let a = EulerAngles::new(0.3, phi, -0.2);
            let b = EulerAngles::from_matrix(&a.to_matrix());
            assert!((a.to_matrix() - b.to_matrix()).amax() < 1e-9);
        }
    }

    #[test]
    fn grid_degenerate_and_small() {
        let g = RotationGrid::build(0, 0.1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.entries()[0].matrix, Matrix3::identity());

        let g = RotationGrid::build(1, 0.1).unwrap();
        assert_eq!(g.len(), 27);
        let mid = &g.entries()[g.identity_index()];
        assert_eq!(mid.index, [0, 0, 0]);
        assert_eq!(mid.matrix, Matrix3::identity());
    }

    #[test]
    fn grid_entries_are_rotations_in_lexicographic_order() {
        let g = RotationGrid::build(2, 0.05).unwrap();
        assert_eq!(g.len(), 125);
        for e in g.entries() {
            assert!(is_rotation(&e.matrix, 1e-9));
        }
        let idx: Vec<_> = g.entries().iter().map(|e| e.index).collect();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(idx, sorted);
        assert_eq!(g, RotationGrid::build(2, 0.05).unwrap());
    }

    #[test]
    fn grid_rejects_wrap() {
        assert!(matches!(
            RotationGrid::build(4, 1.0),
            Err(Error::GridWraps { .. })
        ));
        assert!(RotationGrid::build(1, PI).is_ok());
        assert!(RotationGrid::build(1, 0.0).is_err());
    }

    #[test]
    fn apply_identity_inverse_and_hand_example() {
        let cloud = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-0.5, 0.25, 4.0]]).unwrap();
        assert_eq!(RigidTransform::identity().apply(&cloud), cloud);

        let t = RigidTransform::from_euler(
            EulerAngles::new(0.3, -0.7, 1.1),
            Point3::new(0.1, -2.0, 0.5),
        );
        let back = t.inverse().apply(&t.apply(&cloud));
        for (a, b) in back.iter().zip(cloud.iter()) {
            assert!((a - b).amax() < 1e-12);
        }

        let quarter_z = RigidTransform::from_euler(
            EulerAngles::new(0.0, 0.0, PI / 2.0),
            Point3::new(0.0, 0.0, 1.0),
        );
        let p = quarter_z.apply_point(&Point3::new(1.0, 0.0, 0.0));
        assert!((p - Point3::new(0.0, 1.0, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random_t = |rng: &mut ChaCha8Rng| {
            RigidTransform::from_euler(
                EulerAngles::new(
                    rng.random_range(-PI..PI),
                    rng.random_range(-PI..PI),
                    rng.random_range(-PI..PI),
                ),
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            )
        };
        let cloud = PointCloud::new(
            (0..20)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap();
        for _ in 0..20 {
            let t1 = random_t(&mut rng);
            let t2 = random_t(&mut rng);
            let a = t1.compose(&t2).apply(&cloud);
            let b = t1.apply(&t2.apply(&cloud));
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((p - q).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn geodesic_angle_cases() {
        let i = Matrix3::identity();
        assert_eq!(rotation_geodesic_angle(&i, &i), 0.0);
        for axis in 0..3 {
            let r = axis_rotation(axis, PI / 2.0);
            assert!((rotation_geodesic_angle(&i, &r) - 90.0).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let ra = EulerAngles::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)).to_matrix();
            let rb = EulerAngles::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)).to_matrix();
            let ang = rotation_geodesic_angle(&ra, &rb);
            assert!((ang - quaternion_angle_deg(&(ra.transpose() * rb))).abs() < 1e-6);
            assert_eq!(ang, rotation_geodesic_angle(&rb, &ra));
            assert!((0.0..=180.0).contains(&ang));
        }
    }

    #[test]
    fn cloud_validation() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyCloud)));
        assert!(matches!(
            PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [f64::NAN, 0.0, 0.0]]),
            Err(Error::NonFinite { index: 1 })
        ));
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [0.3, 0.05, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(c.min_chebyshev_separation(), Some(0.3));
        assert!(c.is_separated(0.2));
        assert!(!c.is_separated(0.3));
    }

    #[test]
    fn rigid_transform_validates_rotation() {
        let bad = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(bad, Point3::zeros()).is_err());
        let scaled = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(scaled, Point3::zeros()).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}

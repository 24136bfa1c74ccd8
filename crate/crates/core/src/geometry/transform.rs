//! Rigid transforms: rotation matrix plus translation, validated on
//! construction so downstream frame chains cannot drift off SO(3).

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, Vec3};

const ORTHONORMALITY_TOL: f64 = 1e-9;

/// A rigid (distance-preserving) transform: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: [[f64; 3]; 3],
    translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    /// Builds a transform from a rotation matrix and translation, rejecting
    /// matrices that are not orthonormal with determinant +1 (within 1e-9).
    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3) -> Result<Self, GeometryError> {
        let mut max_dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += rotation[k][i] * rotation[k][j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((dot - expected).abs());
            }
        }
        let det = det3(&rotation);
        max_dev = max_dev.max((det - 1.0).abs());
        if max_dev > ORTHONORMALITY_TOL {
            return Err(GeometryError::InvalidRotation(max_dev));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Self::identity().rotation,
            translation,
        }
    }

    /// Rotation about an arbitrary axis by `angle` radians (Rodrigues).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Option<Self> {
        let u = axis.normalized()?;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let rotation = [
            [
                c + u.x * u.x * t,
                u.x * u.y * t - u.z * s,
                u.x * u.z * t + u.y * s,
            ],
            [
                u.y * u.x * t + u.z * s,
                c + u.y * u.y * t,
                u.y * u.z * t - u.x * s,
            ],
            [
                u.z * u.x * t - u.y * s,
                u.z * u.y * t + u.x * s,
                c + u.z * u.z * t,
            ],
        ];
        Some(Self {
            rotation,
            translation: Vec3::ZERO,
        })
    }

    pub fn rotation_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::X, angle).unwrap()
    }

    pub fn rotation_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Y, angle).unwrap()
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, angle).unwrap()
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Applies the transform: `R p + t`.
    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + self.translation.x,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + self.translation.y,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + self.translation.z,
        )
    }

    /// Rotates a direction vector (ignores translation).
    pub fn apply_vec(&self, v: &Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    /// Composition such that `compose(a, b).apply(p) == a.apply(b.apply(p))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        let translation = self.apply(&other.translation.to_point()).to_vec();
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let neg = Vec3::new(
            -(rt[0][0] * t.x + rt[0][1] * t.y + rt[0][2] * t.z),
            -(rt[1][0] * t.x + rt[1][1] * t.y + rt[1][2] * t.z),
            -(rt[2][0] * t.x + rt[2][1] * t.y + rt[2][2] * t.z),
        );
        RigidTransform {
            rotation: rt,
            translation: neg,
        }
    }

    /// Rotation angle (radians) of the relative rotation between two
    /// transforms. Zero when the rotations agree.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.inverse().compose(other);
        let r = &rel.rotation;
        let tr = r[0][0] + r[1][1] + r[2][2];
        // atan2 of the skew norm against the trace stays accurate for tiny
        // angles, where acos((tr-1)/2) loses half the significand.
        let sin_vec = Vec3::new(
            0.5 * (r[2][1] - r[1][2]),
            0.5 * (r[0][2] - r[2][0]),
            0.5 * (r[1][0] - r[0][1]),
        );
        sin_vec.norm().atan2((tr - 1.0) / 2.0)
    }

    /// How far this transform is from another, measured as translation
    /// distance and rotation angle.
    pub fn deviation_from(&self, other: &RigidTransform) -> (f64, f64) {
        let dt = (self.translation - other.translation).norm();
        (dt, self.rotation_angle_to(other))
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_points_unchanged() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let q = RigidTransform::identity().apply(&p);
        assert_eq!(q, p);
    }

    #[test]
    fn pure_translation() {
        let t = RigidTransform::from_translation(Vec3::new(10.0, 0.0, 0.0));
        let q = t.apply(&Point3::new(1.0, 2.0, 3.0));
        assert!(q.distance(&Point3::new(11.0, 2.0, 3.0)) < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::rotation_z(FRAC_PI_2);
        let q = t.apply(&Point3::new(1.0, 0.0, 0.0));
        assert!(q.distance(&Point3::new(0.0, 1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn compose_with_identity_is_noop() {
        let t = RigidTransform::rotation_y(0.3).compose(&RigidTransform::from_translation(
            Vec3::new(1.0, -2.0, 0.5),
        ));
        let c = RigidTransform::identity().compose(&t);
        let p = Point3::new(4.0, 5.0, 6.0);
        assert!(c.apply(&p).distance(&t.apply(&p)) < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let t = RigidTransform::rotation_x(0.7)
            .compose(&RigidTransform::from_translation(Vec3::new(3.0, 1.0, -2.0)));
        let c = t.compose(&t.inverse());
        let p = Point3::new(-1.0, 8.0, 2.0);
        assert!(c.apply(&p).distance(&p) < 1e-9);
    }

    #[test]
    fn two_quarter_turns_make_a_half_turn() {
        let q = RigidTransform::rotation_z(FRAC_PI_2);
        let half = q.compose(&q);
        let expected = RigidTransform::rotation_z(std::f64::consts::PI);
        let p = Point3::new(1.0, 2.0, 0.0);
        assert!(half.apply(&p).distance(&expected.apply(&p)) < 1e-12);
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let bad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            RigidTransform::new(bad, Vec3::ZERO),
            Err(GeometryError::InvalidRotation(_))
        ));
    }

    #[test]
    fn reflection_rejected() {
        let mirror = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidTransform::new(mirror, Vec3::ZERO).is_err());
    }
}

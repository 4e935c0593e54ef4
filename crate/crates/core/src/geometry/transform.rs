use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::camera::PointCloud;
use super::GeometryError;

/// Orthonormality / determinant tolerance enforced at construction.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Element of SE(3): `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE)
            || !translation.iter().all(|x| x.is_finite())
        {
            return Err(GeometryError::NonOrthonormal {
                max_deviation: ortho,
                determinant: det,
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *r.matrix(),
            translation,
        }
    }

    /// Rotation `Rz(z) * Ry(y) * Rx(x)`.
    pub fn from_euler_xyz(x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_euler_angles(x, y, z);
        Self {
            rotation: *r.matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply_point(p)).collect(),
            pixels: cloud.pixels.clone(),
        }
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// From a homogeneous matrix; the bottom row must be `[0 0 0 1]`.
    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::InvalidInput(format!(
                "homogeneous bottom row must be [0 0 0 1], got {bottom:?}"
            )));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::from_matrix4(&Matrix4::from_row_slice(values))
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
        ]
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRecord {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TransformRecord {
            rotation: self.rotation_row_major(),
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = TransformRecord::deserialize(d)?;
        RigidTransform::new(
            Matrix3::from_row_slice(&rec.rotation),
            Vector3::from(rec.translation),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -3.1f64..3.1,
            -2.0f64..2.0,
            -2.0f64..2.0,
            -2.0f64..2.0,
        )
            .prop_filter("axis", |(x, y, z, ..)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z, a, tx, ty, tz)| {
                RigidTransform::from_axis_angle(Vector3::new(x, y, z), a, Vector3::new(tx, ty, tz))
            })
    }

    #[test]
    fn inverse_of_identity() {
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
    }

    #[test]
    fn rz90_maps_x_to_y() {
        let t = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let p = t.apply_point(&Vector3::x());
        assert!((p - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        // rotate then translate
        let p = a.compose(&b).apply_point(&Vector3::x());
        assert!((p - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn matrix4_and_serde_round_trip() {
        let t = RigidTransform::from_euler_xyz(0.3, -0.2, 1.1, Vector3::new(0.1, 0.2, 0.7));
        let back = RigidTransform::from_matrix4(&t.to_matrix4()).unwrap();
        assert_eq!(t, back);
        let json = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(t in arb_transform()) {
            let id = t.compose(&t.inverse()).to_matrix4();
            let e = (id - Matrix4::identity()).abs().max();
            prop_assert!(e < 1e-9);
        }

        #[test]
        fn apply_inverse_round_trip(t in arb_transform(), pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..20)) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect());
            let back = t.apply(&t.inverse().apply(&cloud));
            for (a, b) in back.points.iter().zip(&cloud.points) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }

        #[test]
        fn rigid_motion_preserves_distances(t in arb_transform(), pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 2..12)) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect());
            let moved = t.apply(&cloud);
            for i in 0..cloud.len() {
                for j in 0..cloud.len() {
                    let d0 = (cloud.points[i] - cloud.points[j]).norm();
                    let d1 = (moved.points[i] - moved.points[j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn rotations_have_unit_determinant(t in arb_transform()) {
            prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
        }
    }
}

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};

use super::{GeometryError, Point3};

/// Orthonormality / determinant tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Deviation from unit norm tolerated by the quaternion conversions.
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Below this magnitude the scalar part is treated as zero when fixing the sign.
const SCALAR_ZERO: f64 = 1e-12;

/// A proper rigid motion `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = rotation_error(&rotation);
        if !(err <= ROTATION_TOLERANCE) || !translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NotARotation(err));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Caller guarantees `rotation` is a proper rotation up to rounding.
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn from_quaternion(orientation: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *orientation.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
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

    /// Rotation part as a sign-canonical unit quaternion.
    pub fn orientation(&self) -> UnitQuaternion<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        canonical_quaternion(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn to_pose(&self) -> Pose {
        Pose::new(Point3::from(self.translation), self.orientation())
    }

    /// Rotation angle of `self.rotation`, in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }
}

/// Max of `‖RᵀR − I‖∞` and `|det R − 1|`.
fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    if ortho.is_nan() || det.is_nan() {
        f64::NAN
    } else {
        ortho.max(det)
    }
}

/// End-effector pose: a position plus a unit quaternion with non-negative scalar part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point3,
    orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Point3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical_quaternion(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Point3::origin(), UnitQuaternion::identity())
    }

    pub fn orientation(&self) -> &UnitQuaternion<f64> {
        &self.orientation
    }

    pub fn set_orientation(&mut self, orientation: UnitQuaternion<f64>) {
        self.orientation = canonical_quaternion(orientation);
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_quaternion(&self.orientation, self.position.coords)
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.position + self.orientation * p.coords
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.transform_point(&other.position),
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(Point3::from(-(inv * self.position.coords)), inv)
    }

    /// Geodesic distance between orientations, radians in `[0, π]`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        rotation_distance(&self.orientation, &other.orientation)
    }
}

/// Geodesic angle between two orientations. Uses `atan2` so that angles near
/// zero keep full precision (unlike `2·acos(w)`).
pub fn rotation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.inverse() * b;
    let q = d.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Flips the quaternion sign so the scalar part is non-negative. When the
/// scalar part is zero the first non-zero vector component is made positive.
pub fn canonical_quaternion(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion().coords; // (x, y, z, w)
    let flip = if c[3].abs() > SCALAR_ZERO {
        c[3] < 0.0
    } else {
        c.iter()
            .take(3)
            .find(|v| v.abs() > SCALAR_ZERO)
            .is_some_and(|v| *v < 0.0)
    };
    if flip {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Rotation matrix of a quaternion given as `(w, x, y, z)`.
pub fn quaternion_to_matrix(q: &Quaternion<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let norm = q.norm();
    if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
        return Err(GeometryError::NonUnitInput(norm));
    }
    let unit = UnitQuaternion::from_quaternion(*q);
    Ok(*unit.to_rotation_matrix().matrix())
}

/// Sign-canonical quaternion of a rotation matrix.
pub fn matrix_to_quaternion(m: &Matrix3<f64>) -> Result<UnitQuaternion<f64>, GeometryError> {
    let err = rotation_error(m);
    if !(err <= UNIT_NORM_TOLERANCE) {
        return Err(GeometryError::NotARotation(err));
    }
    let rot = Rotation3::from_matrix_unchecked(*m);
    Ok(canonical_quaternion(UnitQuaternion::from_rotation_matrix(
        &rot,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rz(angle: f64) -> RigidTransform {
        RigidTransform::from_axis_angle(&Vector3::z(), angle, Vector3::zeros())
    }

    #[test]
    fn compose_identity_is_neutral() {
        let p = RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.7, Vector3::new(0.1, -0.2, 0.3));
        let c = RigidTransform::identity().compose(&p);
        assert_relative_eq!(c.rotation(), p.rotation(), epsilon = 1e-15);
        assert_relative_eq!(c.translation(), p.translation(), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turns_add_up() {
        let c = rz(FRAC_PI_2).compose(&rz(FRAC_PI_2));
        assert_relative_eq!(c.rotation(), rz(PI).rotation(), epsilon = 1e-9);
    }

    #[test]
    fn invalid_rotation_rejected() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            RigidTransform::new(m, Vector3::zeros()),
            Err(GeometryError::NotARotation(_))
        ));
        assert!(RigidTransform::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    #[test]
    fn quaternion_conversion_known_values() {
        let q = matrix_to_quaternion(&Matrix3::identity()).unwrap();
        assert_eq!(q.quaternion().coords, nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0));

        let q = matrix_to_quaternion(rz(PI).rotation()).unwrap();
        let c = q.quaternion();
        assert_relative_eq!(c.w, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.k, 1.0, epsilon = 1e-12);

        let m = quaternion_to_matrix(&Quaternion::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(m, *rz(PI).rotation(), epsilon = 1e-12);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let err = quaternion_to_matrix(&Quaternion::new(1.0, 0.01, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::NonUnitInput(_)));
        // within 1e-6 is accepted
        assert!(quaternion_to_matrix(&Quaternion::new(1.0 + 5e-7, 0.0, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn pose_is_sign_canonical() {
        let q = UnitQuaternion::new_unchecked(Quaternion::new(-0.5, 0.5, -0.5, 0.5));
        let p = Pose::new(Point3::origin(), q);
        assert!(p.orientation().w >= 0.0);
        assert_relative_eq!(p.orientation().angle_to(&q), 0.0, epsilon = 1e-12);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -PI..PI,
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_filter("non-zero axis", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
            .prop_map(|(a, angle, t)| {
                RigidTransform::from_axis_angle(&Vector3::from(a), angle, Vector3::from(t))
            })
    }

    proptest! {
        #[test]
        fn compose_matches_pointwise_application(
            a in arb_transform(),
            b in arb_transform(),
            p in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let p = Point3::from(Vector3::from(p));
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn compose_with_inverse_is_identity(a in arb_transform()) {
            let id = a.compose(&a.inverse()).inverse();
            prop_assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation().norm() < 1e-9);
        }

        #[test]
        fn quaternion_matrix_roundtrip(a in arb_transform()) {
            let q = matrix_to_quaternion(a.rotation()).unwrap();
            prop_assert!(q.w >= 0.0);
            let m = quaternion_to_matrix(q.quaternion()).unwrap();
            prop_assert!((m - a.rotation()).abs().max() < 1e-9);
            let q2 = matrix_to_quaternion(&m).unwrap();
            prop_assert!((q2.quaternion().coords - q.quaternion().coords).norm() < 1e-9);
        }

        #[test]
        fn pose_compose_agrees_with_transform(a in arb_transform(), b in arb_transform()) {
            let pa = a.to_pose();
            let pb = b.to_pose();
            let via_pose = pa.compose(&pb).to_transform();
            let via_mat = a.compose(&b);
            prop_assert!((via_pose.rotation() - via_mat.rotation()).abs().max() < 1e-9);
            prop_assert!((via_pose.translation() - via_mat.translation()).norm() < 1e-9);
            let back = pa.compose(&pa.inverse());
            prop_assert!(back.position.coords.norm() < 1e-9);
            prop_assert!(rotation_distance(back.orientation(), &UnitQuaternion::identity()) < 1e-9);
        }
    }
}

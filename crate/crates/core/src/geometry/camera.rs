use nalgebra::{Matrix3, Matrix3x4, Vector3};

use super::{GeometryError, Point2, Point3, RigidTransform};

/// Pinhole camera with intrinsics `K` and world→camera extrinsics `[R|t]`.
///
/// Camera frame follows the usual vision convention: `x` right, `y` down,
/// `z` along the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    extrinsics: RigidTransform,
    projection: Matrix3x4<f64>,
}

impl CameraModel {
    pub fn new(intrinsics: Matrix3<f64>, extrinsics: RigidTransform) -> Result<Self, GeometryError> {
        if !intrinsics.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidCamera("non-finite intrinsics".into()));
        }
        if intrinsics[(1, 0)] != 0.0 || intrinsics[(2, 0)] != 0.0 || intrinsics[(2, 1)] != 0.0 {
            return Err(GeometryError::InvalidCamera(
                "intrinsics must be upper triangular".into(),
            ));
        }
        if (intrinsics[(2, 2)] - 1.0).abs() > 1e-12 {
            return Err(GeometryError::InvalidCamera(
                "intrinsics must have K[2][2] = 1".into(),
            ));
        }
        if !(intrinsics[(0, 0)] > 0.0 && intrinsics[(1, 1)] > 0.0) {
            return Err(GeometryError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        // Re-validate: extrinsics may have been built unchecked.
        let extrinsics = RigidTransform::new(*extrinsics.rotation(), *extrinsics.translation())?;
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(extrinsics.rotation());
        rt.set_column(3, extrinsics.translation());
        Ok(Self {
            intrinsics,
            extrinsics,
            projection: intrinsics * rt,
        })
    }

    /// Simple intrinsics: focal `f` on both axes, principal point `(cx, cy)`, no skew.
    pub fn simple_intrinsics(f: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
    }

    /// Camera at `eye` whose optical axis points at `target`. `up` fixes the roll
    /// (image `y` points away from it).
    pub fn look_at(
        intrinsics: Matrix3<f64>,
        eye: &Point3,
        target: &Point3,
        up: &Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::InvalidCamera("eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(up);
        if x.norm() < 1e-9 {
            return Err(GeometryError::InvalidCamera("up vector parallel to view axis".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * eye.coords);
        Self::new(intrinsics, RigidTransform::new(r, t)?)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &RigidTransform {
        &self.extrinsics
    }

    /// The 3×4 matrix `K·[R|t]`.
    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3 {
        Point3::from(-(self.extrinsics.rotation().transpose() * self.extrinsics.translation()))
    }

    pub fn to_camera_frame(&self, p: &Point3) -> Point3 {
        self.extrinsics.apply(p)
    }

    /// Depth of `p` along the optical axis.
    pub fn depth(&self, p: &Point3) -> f64 {
        self.to_camera_frame(p).z
    }

    pub fn project(&self, p: &Point3) -> Result<Point2, GeometryError> {
        let h = self.projection * p.to_homogeneous();
        if !(h.z > 0.0) {
            return Err(GeometryError::DepthNonPositive(h.z));
        }
        Ok(Point2::new(h.x / h.z, h.y / h.z))
    }

    /// World point on the ray through `pixel` at camera-frame depth `depth`.
    pub fn back_project(&self, pixel: &Point2, depth: f64) -> Point3 {
        let k = &self.intrinsics;
        let y = (pixel.y - k[(1, 2)]) / k[(1, 1)];
        let x = (pixel.x - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
        let cam = Point3::new(x * depth, y * depth, depth);
        self.extrinsics.inverse().apply(&cam)
    }
}

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{all_finite, GeometryError, Point3, RigidTransform};

/// Relative size of the middle singular value of the centered source points
/// below which the set is considered collinear.
const COLLINEAR_TOLERANCE: f64 = 1e-8;

/// Least-squares rigid transform (rotation + translation, no scale) mapping
/// `src[i]` onto `dst[i]` (Kabsch).
///
/// The rotation comes from the SVD of the cross-covariance of the centered
/// sets; a sign flip on the weakest singular direction keeps `det R = +1`
/// when the unconstrained optimum would be a reflection.
pub fn estimate_rigid_transform(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(GeometryError::TooFew {
            what: "points",
            needed: 3,
            got: src.len(),
        });
    }
    if !src.iter().chain(dst).all(all_finite) {
        return Err(GeometryError::NonFinite);
    }

    let n = src.len() as f64;
    let src_mean = src.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let dst_mean = dst.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;

    let centered = DMatrix::from_fn(src.len(), 3, |r, c| src[r][c] - src_mean[c]);
    let sv = centered.singular_values(); // descending
    if !(sv[1] >= COLLINEAR_TOLERANCE * sv[0]) || sv[0] == 0.0 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "source points are collinear (σ = [{:.3e}, {:.3e}, {:.3e}])",
            sv[0], sv[1], sv[2]
        )));
    }

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - src_mean) * (d.coords - dst_mean).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(GeometryError::DegenerateConfiguration(
                "SVD of cross-covariance failed".into(),
            ))
        }
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

/// Sum of squared distances between `t(src[i])` and `dst[i]`.
pub fn registration_residual(t: &RigidTransform, src: &[Point3], dst: &[Point3]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (t.apply(s) - d).norm_squared())
        .sum()
}

use nalgebra::{DMatrix, Matrix3, RowVector4};

use super::{CameraModel, GeometryError, Point2, Point3};

/// Camera centers closer than this are treated as the same viewpoint (meters).
const COINCIDENT_CENTERS: f64 = 1e-9;

/// Relative size of the second-smallest singular value below which the
/// homogeneous system has more than a one-dimensional null space.
const RANK_TOLERANCE: f64 = 1e-10;

/// Linear (DLT) triangulation of one point seen by two or more cameras.
///
/// Each view contributes the two rows `x·p³ − p¹` and `y·p³ − p²` of the
/// homogeneous system `A·X = 0`; `X` is the right singular vector of the
/// smallest singular value. Pixels and projection rows are first expressed in
/// a per-view normalized frame (principal point at the origin, unit focal
/// scale) so the rows of `A` are of comparable magnitude.
pub fn triangulate_dlt(cameras: &[CameraModel], pixels: &[Point2]) -> Result<Point3, GeometryError> {
    if cameras.len() != pixels.len() {
        return Err(GeometryError::LengthMismatch(cameras.len(), pixels.len()));
    }
    if cameras.len() < 2 {
        return Err(GeometryError::TooFew {
            what: "views",
            needed: 2,
            got: cameras.len(),
        });
    }
    if !pixels.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }

    let centers: Vec<Point3> = cameras.iter().map(CameraModel::center).collect();
    let spread = centers
        .iter()
        .flat_map(|a| centers.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    if spread < COINCIDENT_CENTERS {
        return Err(GeometryError::DegenerateGeometry(
            "camera centers coincide".into(),
        ));
    }

    let mut a = DMatrix::<f64>::zeros(2 * cameras.len(), 4);
    for (i, (cam, px)) in cameras.iter().zip(pixels).enumerate() {
        let t = normalizing_transform(cam);
        let p = t * cam.projection();
        let x = t * px.to_homogeneous();
        let (u, v) = (x.x / x.z, x.y / x.z);
        let p1: RowVector4<f64> = p.row(0).into_owned();
        let p2: RowVector4<f64> = p.row(1).into_owned();
        let p3: RowVector4<f64> = p.row(2).into_owned();
        a.set_row(2 * i, &(p3 * u - p1));
        a.set_row(2 * i + 1, &(p3 * v - p2));
    }

    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    // sorted descending
    if !(sv[2] > RANK_TOLERANCE * sv[0]) {
        return Err(GeometryError::DegenerateGeometry(format!(
            "stacked system is rank deficient (σ = {:?})",
            sv.as_slice()
        )));
    }
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::DegenerateGeometry("SVD did not converge".into()))?;
    let x = v_t.row(3);
    let w = x[3];
    if !(w.abs() > 1e-12 * x.norm()) {
        return Err(GeometryError::DegenerateGeometry(
            "point at infinity".into(),
        ));
    }
    Ok(Point3::new(x[0] / w, x[1] / w, x[2] / w))
}

/// Shift by the principal point and scale isotropically by the mean focal length.
fn normalizing_transform(cam: &CameraModel) -> Matrix3<f64> {
    let k = cam.intrinsics();
    let s = 2.0 / (k[(0, 0)] + k[(1, 1)]);
    Matrix3::new(s, 0.0, -s * k[(0, 2)], 0.0, s, -s * k[(1, 2)], 0.0, 0.0, 1.0)
}

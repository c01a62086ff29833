//! Pinhole cameras, two-view triangulation, rigid registration and SE(3) algebra.
//!
//! All quantities are `f64`. Points in the world live in the robot base frame
//! (meters); image points are in pixels.

mod camera;
mod register;
mod transform;
mod triangulate;

use thiserror::Error;

pub use camera::CameraModel;
pub use register::{estimate_rigid_transform, registration_residual};
pub use transform::{
    canonical_quaternion, matrix_to_quaternion, quaternion_to_matrix, rotation_distance, Pose,
    RigidTransform,
    ROTATION_TOLERANCE,
};
pub use triangulate::triangulate_dlt;

/// Pixel coordinates.
pub type Point2 = nalgebra::Point2<f64>;
/// Metric coordinates in the robot base frame.
pub type Point3 = nalgebra::Point3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point lies at or behind the camera plane (depth {0})")]
    DepthNonPositive(f64),
    #[error("degenerate triangulation geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("quaternion norm {0} is not unit")]
    NonUnitInput(f64),
    #[error("matrix is not a proper rotation (orthonormality error {0:e})")]
    NotARotation(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("mismatched input lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("non-finite coordinate in input")]
    NonFinite,
}

pub(crate) fn all_finite(p: &Point3) -> bool {
    p.coords.iter().all(|c| c.is_finite())
}

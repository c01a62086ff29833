use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::hand::DEFAULT_GRIPPER_THRESHOLD;
use super::RetargetError;
use crate::geometry::{estimate_rigid_transform, Point3, Pose, RigidTransform};

/// Name of the keypoint whose offset is the identity.
pub const WRIST: &str = "wrist";

/// Fixed transforms from the end-effector frame to each robot keypoint.
/// The first entry is the wrist and is always the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    names: Vec<String>,
    offsets: Vec<RigidTransform>,
}

impl OffsetTable {
    pub fn new(names: Vec<String>, offsets: Vec<RigidTransform>) -> Result<Self, RetargetError> {
        if names.len() != offsets.len() || names.len() < 3 {
            return Err(RetargetError::InvalidOffsets(format!(
                "{} names, {} offsets (need at least 3)",
                names.len(),
                offsets.len()
            )));
        }
        let first = &offsets[0];
        if first.translation().norm() > 0.0 || first.angle() > 0.0 {
            return Err(RetargetError::InvalidOffsets("first offset must be the identity".into()));
        }
        let table = Self { names, offsets };
        let pts = table.translations();
        // Registration requires a non-collinear canon.
        estimate_rigid_transform(&pts, &pts)
            .map_err(|e| RetargetError::InvalidOffsets(e.to_string()))?;
        Ok(table)
    }

    /// Wrist plus `±span` along the end-effector `x` and `y` axes.
    pub fn cross(span: f64) -> Result<Self, RetargetError> {
        let names = [WRIST, "plus_x", "minus_x", "plus_y", "minus_y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let offsets = [
            Vector3::zeros(),
            Vector3::new(span, 0.0, 0.0),
            Vector3::new(-span, 0.0, 0.0),
            Vector3::new(0.0, span, 0.0),
            Vector3::new(0.0, -span, 0.0),
        ]
        .into_iter()
        .map(RigidTransform::from_translation)
        .collect();
        Self::new(names, offsets)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn offsets(&self) -> &[RigidTransform] {
        &self.offsets
    }

    /// Keypoint positions of the identity pose.
    pub fn translations(&self) -> Vec<Point3> {
        self.offsets.iter().map(|o| Point3::from(*o.translation())).collect()
    }
}

/// Robot keypoints of `pose`: the translation part of `pose ∘ offset` for each offset.
pub fn pose_to_keypoints(pose: &Pose, offsets: &OffsetTable) -> Vec<Point3> {
    let t = pose.to_transform();
    offsets
        .offsets()
        .iter()
        .map(|o| Point3::from(*t.compose(o).translation()))
        .collect()
}

/// Robot geometry shared by retargeting and control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// Fingertip distance below which the gripper is closed (meters).
    pub gripper_threshold: f64,
    /// Distance of the four outer keypoints from the wrist (meters).
    pub offset_span: f64,
    /// End-effector orientation at the first demo frame, `[w, x, y, z]`.
    pub base_orientation: [f64; 4],
}

impl Default for RobotConfig {
    fn default() -> Self {
        // Gripper pointing straight down: half turn about the base x axis.
        Self {
            gripper_threshold: DEFAULT_GRIPPER_THRESHOLD,
            offset_span: 0.04,
            base_orientation: [0.0, 1.0, 0.0, 0.0],
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gripper_threshold > 0.0) {
            return Err("robot.gripper_threshold must be positive".into());
        }
        if !(self.offset_span > 0.0) {
            return Err("robot.offset_span must be positive".into());
        }
        let [w, x, y, z] = self.base_orientation;
        let n = Quaternion::new(w, x, y, z).norm();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(format!("robot.base_orientation has norm {n}"));
        }
        Ok(())
    }

    pub fn base(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.base_orientation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn offsets(&self) -> OffsetTable {
        OffsetTable::cross(self.offset_span).expect("positive span gives a valid table")
    }
}

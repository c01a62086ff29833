use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geometry::{estimate_rigid_transform, rotation_distance, Point3, Pose};
use crate::retarget::{pose_to_keypoints, OffsetTable, RobotConfig};

/// Commanded end-effector pose and gripper state.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub pose: Pose,
    pub gripper_closed: bool,
}

/// Axis-aligned bounds on commanded positions (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: [0.2, -0.35, 0.0],
            max: [0.8, 0.35, 0.45],
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn clamp_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }

    /// Clamps the action position into bounds; returns whether it moved.
    pub fn clamp(&self, action: &mut Action) -> bool {
        let clamped = self.clamp_point(&action.pose.position);
        if clamped != action.pose.position {
            log::debug!(
                "clamping commanded position {:?} to {:?}",
                action.pose.position.coords.as_slice(),
                clamped.coords.as_slice()
            );
            action.pose.position = clamped;
            true
        } else {
            false
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if (0..3).all(|a| self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a]) {
            Ok(())
        } else {
            Err(format!("workspace bounds {:?}..{:?} are not a box", self.min, self.max))
        }
    }
}

/// Recovers the end-effector pose from robot keypoints: position from the
/// wrist point, orientation from registering the offset canon (rotated into
/// the base orientation) onto the points.
pub fn backtrack_pose(
    points: &[Point3],
    offsets: &OffsetTable,
    base_orientation: &UnitQuaternion<f64>,
) -> Result<Pose, ControlError> {
    if points.len() != offsets.len() {
        return Err(ControlError::PointCount {
            expected: offsets.len(),
            got: points.len(),
        });
    }
    let canon: Vec<Point3> = offsets
        .translations()
        .iter()
        .map(|p| base_orientation * p)
        .collect();
    let delta = estimate_rigid_transform(&canon, points)?;
    Ok(Pose::new(points[0], delta.orientation() * base_orientation))
}

pub fn backtrack_action(
    points: &[Point3],
    gripper_closed: bool,
    offsets: &OffsetTable,
    base_orientation: &UnitQuaternion<f64>,
) -> Result<Action, ControlError> {
    Ok(Action {
        pose: backtrack_pose(points, offsets, base_orientation)?,
        gripper_closed,
    })
}

/// Worst-case errors of [`roundtrip_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripReport {
    pub count: usize,
    pub max_position_error: f64,
    pub max_orientation_error: f64,
}

/// Maps `count` random poses to robot keypoints and back, recording the
/// largest position (meters) and orientation (radians) discrepancy.
pub fn roundtrip_check(count: usize, seed: u64, robot: &RobotConfig) -> Result<RoundtripReport, ControlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let offsets = robot.offsets();
    let base = robot.base();
    let mut report = RoundtripReport {
        count,
        max_position_error: 0.0,
        max_orientation_error: 0.0,
    };
    for _ in 0..count {
        let position = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let q = Quaternion::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        );
        let pose = Pose::new(position, UnitQuaternion::from_quaternion(q));
        let back = backtrack_pose(&pose_to_keypoints(&pose, &offsets), &offsets, &base)?;
        report.max_position_error = report.max_position_error.max((back.position - pose.position).norm());
        report.max_orientation_error = report
            .max_orientation_error
            .max(rotation_distance(back.orientation(), pose.orientation()));
    }
    Ok(report)
}

use nalgebra::UnitQuaternion;

use super::RetargetError;
use crate::geometry::{estimate_rigid_transform, Point3, Pose};

pub const INDEX_TIP: &str = "index_tip";
pub const THUMB_TIP: &str = "thumb_tip";
pub const INDEX_KNUCKLE: &str = "index_knuckle";
pub const WRIST_BASE: &str = "wrist_base";

/// The tracked hand landmarks, in file order.
pub const HAND_KEYPOINTS: [&str; 4] = [INDEX_TIP, THUMB_TIP, INDEX_KNUCKLE, WRIST_BASE];

/// Default fingertip distance below which the gripper counts as closed (meters).
pub const DEFAULT_GRIPPER_THRESHOLD: f64 = 0.07;

/// Named 3D hand points at one instant (meters, robot base frame).
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    pub t: f64,
    names: Vec<String>,
    points: Vec<Point3>,
}

impl HandFrame {
    pub fn new(t: f64, names: Vec<String>, points: Vec<Point3>) -> Result<Self, RetargetError> {
        if names.len() != points.len() {
            return Err(RetargetError::InvalidHandFrame(format!(
                "{} names for {} points",
                names.len(),
                points.len()
            )));
        }
        if points.len() < 4 {
            return Err(RetargetError::InvalidHandFrame(format!(
                "need at least 4 hand points, got {}",
                points.len()
            )));
        }
        if !points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())) {
            return Err(RetargetError::InvalidHandFrame("non-finite hand point".into()));
        }
        Ok(Self { t, names, points })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn get(&self, name: &str) -> Result<Point3, RetargetError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.points[i])
            .ok_or_else(|| RetargetError::MissingKeypoint(name.to_string()))
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            t: self.t,
            names: self.names.clone(),
            points: self.points.iter().map(f).collect(),
        }
    }
}

/// Binary gripper command plus the fingertip distance it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperState {
    pub closed: bool,
    pub distance: f64,
}

impl GripperState {
    pub fn from_distance(distance: f64, threshold: f64) -> Self {
        Self {
            closed: distance < threshold,
            distance,
        }
    }
}

/// Closed exactly when the index and thumb tips are closer than `threshold`.
pub fn gripper_from_hand(frame: &HandFrame, threshold: f64) -> Result<GripperState, RetargetError> {
    let d = (frame.get(INDEX_TIP)? - frame.get(THUMB_TIP)?).norm();
    Ok(GripperState::from_distance(d, threshold))
}

/// Grasp center: midpoint of the index and thumb tips.
pub fn grasp_center(frame: &HandFrame) -> Result<Point3, RetargetError> {
    let a = frame.get(INDEX_TIP)?;
    let b = frame.get(THUMB_TIP)?;
    Ok(Point3::from((a.coords + b.coords) * 0.5))
}

/// End-effector pose for `frame_t`: position at the grasp center, orientation
/// equal to the hand's rotation since `frame0` applied on top of `base_orientation`.
pub fn hand_to_pose(
    frame0: &HandFrame,
    frame_t: &HandFrame,
    base_orientation: &UnitQuaternion<f64>,
) -> Result<Pose, RetargetError> {
    if frame0.names != frame_t.names {
        return Err(RetargetError::SchemaMismatch(format!(
            "{:?} vs {:?}",
            frame0.names, frame_t.names
        )));
    }
    let delta = estimate_rigid_transform(&frame0.points, &frame_t.points)?;
    let orientation = delta.orientation() * base_orientation;
    Ok(Pose::new(grasp_center(frame_t)?, orientation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_distance, RigidTransform};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn names() -> Vec<String> {
        HAND_KEYPOINTS.iter().map(|s| s.to_string()).collect()
    }

    fn hand(gap: f64) -> HandFrame {
        HandFrame::new(
            0.0,
            names(),
            vec![
                Point3::new(0.5, 0.05 + gap / 2.0, 0.1),
                Point3::new(0.5, 0.05 - gap / 2.0, 0.1),
                Point3::new(0.5, 0.08, 0.18),
                Point3::new(0.47, 0.05, 0.22),
            ],
        )
        .unwrap()
    }

    fn base() -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
    }

    #[test]
    fn seven_centimeter_rule() {
        assert!(gripper_from_hand(&hand(0.05), DEFAULT_GRIPPER_THRESHOLD).unwrap().closed);
        assert!(!gripper_from_hand(&hand(0.10), DEFAULT_GRIPPER_THRESHOLD).unwrap().closed);
        let boundary = GripperState::from_distance(0.07, DEFAULT_GRIPPER_THRESHOLD);
        assert!(!boundary.closed);
    }

    #[test]
    fn missing_tip_reported() {
        let mut n = names();
        n[1] = "pinky_tip".into();
        let f = HandFrame::new(0.0, n, hand(0.05).points().to_vec()).unwrap();
        assert!(matches!(
            gripper_from_hand(&f, 0.07),
            Err(RetargetError::MissingKeypoint(_))
        ));
    }

    #[test]
    fn unchanged_hand_keeps_base_orientation() {
        let f = hand(0.1);
        let pose = hand_to_pose(&f, &f, &base()).unwrap();
        assert!(rotation_distance(pose.orientation(), &base()) < 1e-9);
        assert!((pose.position - Point3::new(0.5, 0.05, 0.1)).norm() < 1e-12);
    }

    #[test]
    fn rotated_hand_rotates_orientation() {
        let f0 = hand(0.1);
        let rz = RigidTransform::from_axis_angle(&Vector3::z(), 30f64.to_radians(), Vector3::zeros());
        let ft = f0.map_points(|p| rz.apply(p));
        let pose = hand_to_pose(&f0, &ft, &base()).unwrap();
        let want = rz.orientation() * base();
        assert!(rotation_distance(pose.orientation(), &want) < 1e-9);
    }

    #[test]
    fn translated_hand_shifts_position_only() {
        let f0 = hand(0.1);
        let ft = f0.map_points(|p| p + Vector3::new(0.2, 0.0, 0.0));
        let pose = hand_to_pose(&f0, &ft, &base()).unwrap();
        let p0 = hand_to_pose(&f0, &f0, &base()).unwrap();
        assert!((pose.position - p0.position - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
        assert!(rotation_distance(pose.orientation(), p0.orientation()) < 1e-9);
    }

    #[test]
    fn symmetric_pinch_does_not_tilt_orientation() {
        let f0 = hand(0.10);
        let rz = RigidTransform::from_axis_angle(&Vector3::new(0.2, 0.1, 1.0), 0.7, Vector3::new(0.1, 0.0, -0.05));
        // closing the fingers symmetrically about the grasp center
        let closed = hand(0.04).map_points(|p| rz.apply(p));
        let pose = hand_to_pose(&f0, &closed, &base()).unwrap();
        assert!(rotation_distance(pose.orientation(), &(rz.orientation() * base())) < 1e-9);
    }

    proptest! {
        #[test]
        fn gripper_is_monotone(a in 0.0f64..0.2, b in 0.0f64..0.2) {
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let s_far = GripperState::from_distance(far, DEFAULT_GRIPPER_THRESHOLD);
            let s_near = GripperState::from_distance(near, DEFAULT_GRIPPER_THRESHOLD);
            prop_assert!(!(s_far.closed && !s_near.closed));
        }

        #[test]
        fn equivariant_under_rigid_motion(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.0f64..3.0,
            shift in prop::array::uniform3(-0.5f64..0.5),
            motion_angle in -1.0f64..1.0,
        ) {
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let g = RigidTransform::from_axis_angle(&Vector3::from(axis), angle, Vector3::from(shift));
            let f0 = hand(0.1);
            let m = RigidTransform::from_axis_angle(&Vector3::z(), motion_angle, Vector3::new(0.05, -0.02, 0.1));
            let ft = f0.map_points(|p| m.apply(p));
            let pose = hand_to_pose(&f0, &ft, &base()).unwrap();
            let moved = hand_to_pose(
                &f0.map_points(|p| g.apply(p)),
                &ft.map_points(|p| g.apply(p)),
                &(g.orientation() * base()),
            ).unwrap();
            prop_assert!((moved.position - g.apply(&pose.position)).norm() < 1e-9);
            let want = g.orientation() * pose.orientation();
            prop_assert!(rotation_distance(moved.orientation(), &want) < 1e-9);
        }
    }
}

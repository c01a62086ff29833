//! Hand keypoint tracks to robot poses, gripper states and rigid robot keypoints.

mod hand;
mod lift;
mod robot;

use thiserror::Error;

use crate::dataio::{DataError, DemoHeader, Demonstration, Frame, KeypointSpec, Role};
use crate::geometry::{CameraModel, GeometryError, Point3, Pose};

pub use hand::{
    grasp_center, gripper_from_hand, hand_to_pose, GripperState, HandFrame, DEFAULT_GRIPPER_THRESHOLD,
    HAND_KEYPOINTS, INDEX_KNUCKLE, INDEX_TIP, THUMB_TIP, WRIST_BASE,
};
pub use lift::lift_track;
pub use robot::{pose_to_keypoints, OffsetTable, RobotConfig, WRIST};

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("missing keypoint {0:?}")]
    MissingKeypoint(String),
    #[error("invalid hand frame: {0}")]
    InvalidHandFrame(String),
    #[error("hand frames use different keypoint schemas: {0}")]
    SchemaMismatch(String),
    #[error("invalid offset table: {0}")]
    InvalidOffsets(String),
    #[error("expected {expected} views per frame, got {got}")]
    ViewCount { expected: usize, got: usize },
    #[error("keypoint is occluded in every frame")]
    NeverVisible,
    #[error("demonstration has no frames")]
    EmptyDemo,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-frame retargeting output.
#[derive(Debug, Clone, PartialEq)]
pub struct RetargetedFrame {
    pub t: f64,
    pub pose: Pose,
    pub gripper: GripperState,
    pub robot_points: Vec<Point3>,
    pub object_points: Vec<Point3>,
}

/// Lifts every tracked keypoint and converts the hand into end-effector
/// poses, gripper states and robot keypoints. Object tracks are lifted and
/// passed through unchanged.
pub fn retarget_frames(
    demo: &Demonstration,
    cameras: &[CameraModel],
    robot: &RobotConfig,
) -> Result<Vec<RetargetedFrame>, RetargetError> {
    if demo.frames.is_empty() {
        return Err(RetargetError::EmptyDemo);
    }
    for name in HAND_KEYPOINTS {
        if demo.keypoint_index(name).is_none() {
            return Err(RetargetError::MissingKeypoint(name.to_string()));
        }
    }
    let hand_idx = demo.indices_of(Role::Hand);
    let object_idx = demo.indices_of(Role::Object);
    let lift = |k: usize| -> Result<Vec<Point3>, RetargetError> {
        let track: Vec<_> = demo
            .frames
            .iter()
            .map(|f| f.views.iter().map(|v| v[k]).collect())
            .collect();
        lift_track(cameras, &track)
    };
    let hand_tracks = hand_idx.iter().map(|&k| lift(k)).collect::<Result<Vec<_>, _>>()?;
    let object_tracks = object_idx.iter().map(|&k| lift(k)).collect::<Result<Vec<_>, _>>()?;
    let hand_names: Vec<String> = hand_idx
        .iter()
        .map(|&k| demo.header.keypoints[k].name.clone())
        .collect();

    let offsets = robot.offsets();
    let base = robot.base();
    let hand_frames = demo
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| HandFrame::new(f.t, hand_names.clone(), hand_tracks.iter().map(|tr| tr[t]).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    let frame0 = &hand_frames[0];
    hand_frames
        .iter()
        .enumerate()
        .map(|(t, hf)| {
            let pose = hand_to_pose(frame0, hf, &base)?;
            Ok(RetargetedFrame {
                t: hf.t,
                gripper: gripper_from_hand(hf, robot.gripper_threshold)?,
                robot_points: pose_to_keypoints(&pose, &offsets),
                object_points: object_tracks.iter().map(|tr| tr[t]).collect(),
                pose,
            })
        })
        .collect()
}

/// Converts a two-view hand demonstration into a robot-keypoint demonstration
/// (3D robot and object points plus gripper state per frame).
pub fn retarget_demo(
    demo: &Demonstration,
    cameras: &[CameraModel],
    robot: &RobotConfig,
) -> Result<Demonstration, RetargetError> {
    let frames = retarget_frames(demo, cameras, robot)?;
    let offsets = robot.offsets();
    let object_names: Vec<String> = demo
        .indices_of(Role::Object)
        .iter()
        .map(|&k| demo.header.keypoints[k].name.clone())
        .collect();
    let keypoints = offsets
        .names()
        .iter()
        .map(|n| KeypointSpec::new(n.clone(), Role::Robot))
        .chain(object_names.iter().map(|n| KeypointSpec::new(n.clone(), Role::Object)))
        .collect();
    let mut header = DemoHeader::new(&demo.header.task, demo.header.rate_hz, keypoints, Vec::new());
    header.seed = demo.header.seed;
    let frames = frames
        .into_iter()
        .map(|f| Frame {
            t: f.t,
            views: Vec::new(),
            points: Some(
                f.robot_points
                    .iter()
                    .chain(f.object_points.iter())
                    .map(|p| [p.x, p.y, p.z])
                    .collect(),
            ),
            gripper: Some(f.gripper.closed),
        })
        .collect();
    Ok(Demonstration { header, frames })
}

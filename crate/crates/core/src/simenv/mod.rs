//! Kinematic point-space world: tasks, scripted expert demonstrations, two
//! virtual cameras with noise, and seeded evaluation.

mod eval;
mod expert;
mod observe;
mod scene;
mod task;

use thiserror::Error;

use crate::control::ControlError;
use crate::dataio::DataError;
use crate::geometry::GeometryError;
use crate::retarget::RetargetError;

pub use eval::{evaluate, lift_frames, EvalOptions, EvalPolicy, EvalReport, SimEnv, TrialRecord};
pub use expert::{
    hand_points, min_jerk, render_demo, scripted_expert, ExpertTrajectory, EXPERT_RATE_HZ, FINGER_GAP_CLOSED,
    FINGER_GAP_OPEN,
};
pub use observe::{lift_with_sensor_depth, observe_points, LiftingMode, NoiseModel};
pub use scene::{home_pose, object_keypoints, Scene, BLOCK_HALF, HOME_POSITION, MARKER_HEIGHT, PUSHER_RADIUS};
pub use task::{SpawnRange, TaskConfig, TaskKind, TaskSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid task specification: {0}")]
    InvalidSpec(String),
    #[error("expert planning failed: {0}")]
    PlanningFailed(String),
    #[error("sensor depth requested but not present in the observation")]
    MissingDepth,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Seed stream for demonstration scenes.
pub const DEMO_STREAM: u64 = 1;
/// Seed stream for evaluation scenes.
pub const EVAL_STREAM: u64 = 2;

/// Scene seed for item `index` of `stream` under the user seed `base`
/// (SplitMix64 finalizer over the packed inputs).
pub fn scene_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

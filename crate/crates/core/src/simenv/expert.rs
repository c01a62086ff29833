use nalgebra::{UnitQuaternion, Vector3};

use super::observe::{observe_points, NoiseModel};
use super::scene::{home_pose, Scene, BLOCK_HALF, PUSHER_RADIUS};
use super::task::{TaskKind, TaskSpec};
use super::SimError;
use crate::control::Action;
use crate::dataio::{CameraRecord, DemoHeader, Demonstration, Frame, KeypointSpec, Role};
use crate::geometry::{Point3, Pose};
use crate::retarget::{pose_to_keypoints, HandFrame, OffsetTable, DEFAULT_GRIPPER_THRESHOLD, HAND_KEYPOINTS};

/// Recording rate of scripted demonstrations (Hz).
pub const EXPERT_RATE_HZ: f64 = 20.0;
/// Fingertip distance with the hand open and closed (meters).
pub const FINGER_GAP_OPEN: f64 = 0.10;
pub const FINGER_GAP_CLOSED: f64 = 0.04;
/// Cruise height for transport moves (meters).
const TRAVEL_HEIGHT: f64 = 0.12;

/// Hand landmark positions in the end-effector frame, in [`HAND_KEYPOINTS`]
/// order. The fingertips sit symmetrically about the grasp center.
fn hand_local(gap: f64) -> [Vector3<f64>; 4] {
    [
        Vector3::new(0.0, gap / 2.0, 0.0),
        Vector3::new(0.0, -gap / 2.0, 0.0),
        Vector3::new(0.0, 0.02, -0.08),
        Vector3::new(-0.04, 0.0, -0.12),
    ]
}

/// Hand landmarks for an end-effector pose and fingertip gap.
pub fn hand_points(pose: &Pose, gap: f64) -> Vec<Point3> {
    hand_local(gap).iter().map(|v| pose.transform_point(&Point3::from(*v))).collect()
}

/// Normalized minimum-jerk profile on `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[derive(Debug, Clone, Copy)]
struct Waypoint {
    position: Point3,
    yaw: f64,
    gap: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    to: Waypoint,
    duration: f64,
}

fn seg(position: Point3, yaw: f64, gap: f64, duration: f64) -> Segment {
    Segment {
        to: Waypoint { position, yaw, gap },
        duration,
    }
}

fn plan(spec: &TaskSpec, scene: &Scene) -> Vec<Segment> {
    let (open, closed) = (FINGER_GAP_OPEN, FINGER_GAP_CLOSED);
    let c = scene.object.position;
    match spec.kind {
        TaskKind::Reach => vec![seg(c, 0.0, open, 2.0), seg(c, 0.0, open, 0.5)],
        TaskKind::PushBlock => {
            let standoff = BLOCK_HALF + PUSHER_RADIUS + 0.04;
            let start_x = c.x - standoff;
            let end_x = spec.push_goal_x + 0.08 - BLOCK_HALF - PUSHER_RADIUS;
            let z = BLOCK_HALF;
            vec![
                seg(Point3::new(start_x, c.y, 0.10), 0.0, open, 1.5),
                seg(Point3::new(start_x, c.y, z), 0.0, open, 0.8),
                seg(Point3::new(end_x, c.y, z), 0.0, open, 1.8),
                seg(Point3::new(end_x, c.y, TRAVEL_HEIGHT), 0.0, open, 0.6),
                seg(Point3::new(end_x, c.y, TRAVEL_HEIGHT), 0.0, open, 0.3),
            ]
        }
        TaskKind::PickPlace => {
            let x = scene.object.orientation() * Vector3::x();
            let yaw = x.y.atan2(x.x);
            let above = Point3::new(c.x, c.y, TRAVEL_HEIGHT);
            let [zx, zy] = spec.zone_center;
            let over_zone = Point3::new(zx, zy, TRAVEL_HEIGHT);
            let place = Point3::new(zx, zy, BLOCK_HALF + 0.01);
            vec![
                seg(above, yaw, open, 1.5),
                seg(c, yaw, open, 1.0),
                seg(c, yaw, closed, 0.5),
                seg(above, yaw, closed, 0.8),
                seg(over_zone, yaw, closed, 1.5),
                seg(place, yaw, closed, 0.8),
                seg(place, yaw, open, 0.5),
                seg(over_zone, yaw, open, 0.6),
            ]
        }
    }
}

/// A scripted demonstration with its ground truth, sampled at [`EXPERT_RATE_HZ`].
#[derive(Debug, Clone)]
pub struct ExpertTrajectory {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    pub finger_gaps: Vec<f64>,
    pub hands: Vec<HandFrame>,
    /// Object keypoints after each frame's motion.
    pub object_points: Vec<Vec<Point3>>,
    pub object_names: Vec<String>,
    pub final_scene: Scene,
}

impl ExpertTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn gripper_closed(&self, frame: usize) -> bool {
        self.finger_gaps[frame] < DEFAULT_GRIPPER_THRESHOLD
    }

    /// Every `stride`-th frame plus the last one.
    pub fn subsample_indices(&self, stride: usize) -> Vec<usize> {
        assert!(stride > 0, "stride must be positive");
        let mut idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        if idx.last() != Some(&(self.len() - 1)) {
            idx.push(self.len() - 1);
        }
        idx
    }

    /// Robot keypoints and gripper commands at control rate, for replay.
    pub fn control_plan(&self, stride: usize, offsets: &OffsetTable) -> Vec<(Vec<Point3>, bool)> {
        self.subsample_indices(stride)
            .into_iter()
            .map(|k| (pose_to_keypoints(&self.poses[k], offsets), self.gripper_closed(k)))
            .collect()
    }
}

/// Generates a smooth hand trajectory that solves the task from `scene`:
/// minimum-jerk moves between task waypoints starting at the home pose, with
/// the fingers closing and opening in place. The scene is simulated along the
/// way so object keypoints reflect pushing and carrying.
pub fn scripted_expert(spec: &TaskSpec, scene: &Scene) -> Result<ExpertTrajectory, SimError> {
    let segments = plan(spec, scene);
    for s in &segments {
        if !spec.workspace.contains(&s.to.position) {
            return Err(SimError::PlanningFailed(format!(
                "waypoint {:?} lies outside the workspace",
                s.to.position.coords.as_slice()
            )));
        }
    }
    let home = home_pose();
    let base = *home.orientation();
    let start = Waypoint {
        position: home.position,
        yaw: 0.0,
        gap: FINGER_GAP_OPEN,
    };
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let n = (total * EXPERT_RATE_HZ).round() as usize;

    let names: Vec<String> = HAND_KEYPOINTS.iter().map(|s| s.to_string()).collect();
    let mut sim = scene.clone();
    sim.robot = home.clone();
    let mut out = ExpertTrajectory {
        times: Vec::with_capacity(n + 1),
        poses: Vec::with_capacity(n + 1),
        finger_gaps: Vec::with_capacity(n + 1),
        hands: Vec::with_capacity(n + 1),
        object_points: Vec::with_capacity(n + 1),
        object_names: scene.object_names(),
        final_scene: scene.clone(),
    };
    for k in 0..=n {
        let t = k as f64 / EXPERT_RATE_HZ;
        let (mut from, mut t0) = (start, 0.0);
        let mut state = start;
        for s in &segments {
            if t <= t0 + s.duration || std::ptr::eq(s, segments.last().expect("non-empty plan")) {
                let a = min_jerk((t - t0) / s.duration);
                state = Waypoint {
                    position: from.position + (s.to.position - from.position) * a,
                    yaw: from.yaw + (s.to.yaw - from.yaw) * a,
                    gap: from.gap + (s.to.gap - from.gap) * a,
                };
                break;
            }
            from = s.to;
            t0 += s.duration;
        }
        let pose = Pose::new(
            state.position,
            UnitQuaternion::from_euler_angles(0.0, 0.0, state.yaw) * base,
        );
        sim.step(&Action {
            pose: pose.clone(),
            gripper_closed: state.gap < DEFAULT_GRIPPER_THRESHOLD,
        });
        out.times.push(t);
        out.hands.push(HandFrame::new(t, names.clone(), hand_points(&pose, state.gap))?);
        out.poses.push(pose);
        out.finger_gaps.push(state.gap);
        out.object_points.push(sim.object_points());
    }
    out.final_scene = sim;
    Ok(out)
}

/// Resets the task from `seed`, runs the scripted expert and records what
/// the cameras see: hand landmarks followed by object keypoints in every view.
pub fn render_demo(
    spec: &TaskSpec,
    seed: u64,
    cameras: &[CameraRecord],
    noise: &NoiseModel,
) -> Result<(Demonstration, ExpertTrajectory), SimError> {
    noise.validate()?;
    let mut scene = Scene::reset(spec, seed)?;
    let expert = scripted_expert(spec, &scene)?;
    let models = cameras.iter().map(|c| c.to_camera()).collect::<Result<Vec<_>, _>>()?;
    let keypoints = HAND_KEYPOINTS
        .iter()
        .map(|n| KeypointSpec::new(*n, Role::Hand))
        .chain(expert.object_names.iter().map(|n| KeypointSpec::new(n.clone(), Role::Object)))
        .collect();
    let mut header = DemoHeader::new(spec.kind.name(), EXPERT_RATE_HZ, keypoints, cameras.to_vec());
    header.seed = Some(seed);
    let mut frames = Vec::with_capacity(expert.len());
    for k in 0..expert.len() {
        let points: Vec<Point3> = expert.hands[k]
            .points()
            .iter()
            .chain(&expert.object_points[k])
            .copied()
            .collect();
        frames.push(Frame {
            t: expert.times[k],
            views: observe_points(&points, &models, noise, false, &mut scene.rng)?,
            points: None,
            gripper: None,
        });
    }
    Ok((Demonstration { header, frames }, expert))
}

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::task::{TaskKind, TaskSpec};
use super::SimError;
use crate::control::{Action, Workspace};
use crate::geometry::{Point3, Pose};
use crate::retarget::RobotConfig;

/// End-effector position at the start of every episode.
pub const HOME_POSITION: [f64; 3] = [0.5, 0.0, 0.25];
/// Half the edge length of the cubic block (meters).
pub const BLOCK_HALF: f64 = 0.02;
/// Height of the reach marker above the table (meters).
pub const MARKER_HEIGHT: f64 = 0.05;
/// Radius of the sphere around the grasp center that contacts the block when pushing.
pub const PUSHER_RADIUS: f64 = 0.01;
/// Longest straight-line move between contact checks.
const CONTACT_SUBSTEP: f64 = 0.005;

pub fn home_pose() -> Pose {
    Pose::new(Point3::from(HOME_POSITION), RobotConfig::default().base())
}

/// Names and block-frame positions of the tracked object keypoints.
pub fn object_keypoints(kind: TaskKind) -> Vec<(&'static str, Vector3<f64>)> {
    match kind {
        TaskKind::Reach => vec![("marker", Vector3::zeros())],
        TaskKind::PushBlock | TaskKind::PickPlace => vec![
            ("top_minus_x", Vector3::new(-BLOCK_HALF, 0.0, BLOCK_HALF)),
            ("top_plus_x", Vector3::new(BLOCK_HALF, 0.0, BLOCK_HALF)),
            ("top_plus_y", Vector3::new(0.0, BLOCK_HALF, BLOCK_HALF)),
        ],
    }
}

/// Kinematic world state for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub kind: TaskKind,
    pub robot: Pose,
    pub gripper_closed: bool,
    /// Marker or block center pose.
    pub object: Pose,
    /// Object pose in the end-effector frame while grasped.
    pub attached: Option<Pose>,
    pub workspace: Workspace,
    grasp_radius: f64,
    object_local: Vec<Vector3<f64>>,
    /// Drives observation noise after the spawn draw.
    pub rng: ChaCha8Rng,
}

fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let x = q * Vector3::x();
    x.y.atan2(x.x)
}

impl Scene {
    /// Samples a fresh episode: the robot at home with the gripper open and
    /// the object uniformly within the spawn ranges.
    pub fn reset(spec: &TaskSpec, seed: u64) -> Result<Self, SimError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rng.random_range(spec.spawn.x[0]..=spec.spawn.x[1]);
        let y = rng.random_range(spec.spawn.y[0]..=spec.spawn.y[1]);
        let yaw = rng.random_range(spec.spawn.yaw[0]..=spec.spawn.yaw[1]);
        let z = match spec.kind {
            TaskKind::Reach => MARKER_HEIGHT,
            _ => BLOCK_HALF,
        };
        Ok(Self {
            kind: spec.kind,
            robot: home_pose(),
            gripper_closed: false,
            object: Pose::new(Point3::new(x, y, z), UnitQuaternion::from_euler_angles(0.0, 0.0, yaw)),
            attached: None,
            workspace: spec.workspace,
            grasp_radius: spec.grasp_radius,
            object_local: object_keypoints(spec.kind).into_iter().map(|(_, v)| v).collect(),
            rng,
        })
    }

    pub fn object_names(&self) -> Vec<String> {
        object_keypoints(self.kind).into_iter().map(|(n, _)| n.to_string()).collect()
    }

    pub fn object_points(&self) -> Vec<Point3> {
        self.object_local
            .iter()
            .map(|v| self.object.transform_point(&Point3::from(*v)))
            .collect()
    }

    pub fn object_centroid(&self) -> Point3 {
        let pts = self.object_points();
        let sum: Vector3<f64> = pts.iter().map(|p| p.coords).sum();
        Point3::from(sum / pts.len() as f64)
    }

    fn grasping_enabled(&self) -> bool {
        self.kind == TaskKind::PickPlace
    }

    /// Position control: the end effector moves to the (clamped) commanded
    /// pose, pushing the block on the way if the task allows contact; then
    /// the gripper command is applied. Closing within the grasp radius of the
    /// block center attaches it, opening drops it flat onto the table.
    pub fn step(&mut self, action: &Action) {
        let target = self.workspace.clamp_point(&action.pose.position);
        if self.kind == TaskKind::PushBlock {
            let start = self.robot.position;
            let n = ((target - start).norm() / CONTACT_SUBSTEP).ceil().max(1.0) as usize;
            for i in 1..=n {
                let p = start + (target - start) * (i as f64 / n as f64);
                self.resolve_contact(&p);
            }
        }
        self.robot = Pose::new(target, *action.pose.orientation());

        let was_closed = self.gripper_closed;
        self.gripper_closed = action.gripper_closed;
        if self.grasping_enabled() {
            if !was_closed && self.gripper_closed && self.attached.is_none() {
                if (self.robot.position - self.object.position).norm() < self.grasp_radius {
                    self.attached = Some(self.robot.inverse().compose(&self.object));
                }
            } else if was_closed && !self.gripper_closed && self.attached.is_some() {
                self.attached = None;
                let yaw = yaw_of(self.object.orientation());
                let p = self.object.position;
                self.object = Pose::new(
                    Point3::new(p.x, p.y, BLOCK_HALF),
                    UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
                );
            }
        }
        if let Some(rel) = &self.attached {
            self.object = self.robot.compose(rel);
        }
    }

    /// Moves the block out of the pusher sphere centered at `pusher`, along
    /// the shortest direction in the table plane.
    fn resolve_contact(&mut self, pusher: &Point3) {
        let top = self.object.position.z + BLOCK_HALF;
        if pusher.z >= top + PUSHER_RADIUS {
            return;
        }
        let local = self.object.inverse().transform_point(pusher);
        let c = Vector2::new(local.x, local.y);
        let closest = Vector2::new(c.x.clamp(-BLOCK_HALF, BLOCK_HALF), c.y.clamp(-BLOCK_HALF, BLOCK_HALF));
        let d = c - closest;
        let dist = d.norm();
        let shift = if dist > 1e-12 {
            if dist >= PUSHER_RADIUS {
                return;
            }
            -d / dist * (PUSHER_RADIUS - dist)
        } else {
            // Pusher center inside the footprint: leave through the nearest face.
            let exits = [
                (BLOCK_HALF - c.x, Vector2::new(-1.0, 0.0)),
                (c.x + BLOCK_HALF, Vector2::new(1.0, 0.0)),
                (BLOCK_HALF - c.y, Vector2::new(0.0, -1.0)),
                (c.y + BLOCK_HALF, Vector2::new(0.0, 1.0)),
            ];
            let (depth, dir) = exits
                .into_iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("four faces");
            dir * (depth + PUSHER_RADIUS)
        };
        if shift.norm() <= 1e-12 {
            return;
        }
        let world = self.object.orientation() * Vector3::new(shift.x, shift.y, 0.0);
        let mut p = self.object.position + world;
        p.x = p.x.clamp(self.workspace.min[0], self.workspace.max[0]);
        p.y = p.y.clamp(self.workspace.min[1], self.workspace.max[1]);
        self.object.position = p;
    }

    /// Distance from the block centroid (table plane) to the target zone square.
    fn zone_distance(&self, spec: &TaskSpec) -> f64 {
        let c = self.object_centroid();
        let dx = ((c.x - spec.zone_center[0]).abs() - spec.zone_half_size).max(0.0);
        let dy = ((c.y - spec.zone_center[1]).abs() - spec.zone_half_size).max(0.0);
        dx.hypot(dy)
    }

    /// Task-specific distance to success (meters, 0 when the goal region is reached).
    pub fn task_error(&self, spec: &TaskSpec) -> f64 {
        match spec.kind {
            TaskKind::Reach => (self.robot.position - self.object.position).norm(),
            TaskKind::PushBlock => (spec.push_goal_x - self.object_centroid().x).max(0.0),
            TaskKind::PickPlace => self.zone_distance(spec),
        }
    }

    /// Strict success predicate evaluated on the current state.
    pub fn is_success(&self, spec: &TaskSpec) -> bool {
        match spec.kind {
            TaskKind::Reach => (self.robot.position - self.object.position).norm() < spec.reach_tolerance,
            TaskKind::PushBlock => self.object_centroid().x > spec.push_goal_x,
            TaskKind::PickPlace => self.attached.is_none() && self.zone_distance(spec) < spec.zone_tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn act(scene: &Scene, p: Point3, closed: bool) -> Action {
        Action {
            pose: Pose::new(p, *scene.robot.orientation()),
            gripper_closed: closed,
        }
    }

    #[test]
    fn reset_is_deterministic_and_fixed_for_zero_width() {
        let spec = TaskSpec::default_for(TaskKind::PickPlace);
        assert_eq!(Scene::reset(&spec, 4).unwrap(), Scene::reset(&spec, 4).unwrap());
        assert_ne!(Scene::reset(&spec, 4).unwrap().object, Scene::reset(&spec, 5).unwrap().object);
        let mut fixed = spec.clone();
        fixed.spawn.x = [0.45, 0.45];
        fixed.spawn.y = [0.01, 0.01];
        fixed.spawn.yaw = [0.2, 0.2];
        for seed in 0..5 {
            let s = Scene::reset(&fixed, seed).unwrap();
            assert_eq!(s.object.position, Point3::new(0.45, 0.01, BLOCK_HALF));
            assert!((yaw_of(s.object.orientation()) - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn spawn_positions_are_uniform() {
        // Pearson chi-square on 10 equal bins per axis, 9 degrees of freedom;
        // 21.666 is the 99th percentile.
        let spec = TaskSpec::default_for(TaskKind::Reach);
        let mut bins_x = [0usize; 10];
        let mut bins_y = [0usize; 10];
        for seed in 0..1000 {
            let p = Scene::reset(&spec, seed).unwrap().object.position;
            let fx = (p.x - spec.spawn.x[0]) / (spec.spawn.x[1] - spec.spawn.x[0]);
            let fy = (p.y - spec.spawn.y[0]) / (spec.spawn.y[1] - spec.spawn.y[0]);
            bins_x[((fx * 10.0) as usize).min(9)] += 1;
            bins_y[((fy * 10.0) as usize).min(9)] += 1;
        }
        for bins in [bins_x, bins_y] {
            let chi2: f64 = bins.iter().map(|&o| (o as f64 - 100.0).powi(2) / 100.0).sum();
            assert!(chi2 < 21.666, "chi2 {chi2} for {bins:?}");
        }
    }

    #[test]
    fn invalid_spawn_rejected() {
        let mut spec = TaskSpec::default_for(TaskKind::Reach);
        spec.spawn.x = [0.6, 0.4];
        assert!(matches!(Scene::reset(&spec, 0), Err(SimError::InvalidSpec(_))));
        spec.spawn.x = [0.1, 0.4];
        assert!(matches!(Scene::reset(&spec, 0), Err(SimError::InvalidSpec(_))));
    }

    #[test]
    fn holding_still_changes_nothing() {
        for kind in TaskKind::ALL {
            let spec = TaskSpec::default_for(kind);
            let mut scene = Scene::reset(&spec, 1).unwrap();
            let before = scene.clone();
            let a = act(&scene, scene.robot.position, false);
            scene.step(&a);
            assert_eq!(scene, before);
        }
    }

    #[test]
    fn closing_far_from_block_does_not_grasp() {
        let spec = TaskSpec::default_for(TaskKind::PickPlace);
        let mut scene = Scene::reset(&spec, 2).unwrap();
        let a = act(&scene, scene.robot.position, true);
        scene.step(&a);
        assert!(scene.attached.is_none());
        assert!(scene.gripper_closed);
    }

    #[test]
    fn grasp_then_translate_moves_block_rigidly() {
        let spec = TaskSpec::default_for(TaskKind::PickPlace);
        let mut scene = Scene::reset(&spec, 3).unwrap();
        let c = scene.object.position + Vector3::new(0.005, -0.004, 0.01);
        scene.step(&act(&scene, c, false));
        scene.step(&act(&scene, c, true));
        assert!(scene.attached.is_some());
        let before = scene.object_points();
        let shift = Vector3::new(0.05, 0.1, 0.12);
        scene.step(&act(&scene, c + shift, true));
        for (a, b) in before.iter().zip(scene.object_points()) {
            assert!((b - a - shift).norm() < 1e-12);
        }
        scene.step(&act(&scene, c + shift, false));
        assert!(scene.attached.is_none());
        assert!((scene.object.position.z - BLOCK_HALF).abs() < 1e-12);
    }

    #[test]
    fn pusher_moves_block_along_push_direction() {
        let spec = TaskSpec::default_for(TaskKind::PushBlock);
        let mut scene = Scene::reset(&spec, 0).unwrap();
        let c = scene.object.position;
        let behind = Point3::new(c.x - 0.06, c.y, 0.02);
        scene.step(&act(&scene, Point3::new(behind.x, behind.y, 0.1), false));
        scene.step(&act(&scene, behind, false));
        assert_eq!(scene.object.position, c);
        scene.step(&act(&scene, Point3::new(c.x + 0.1, c.y, 0.02), false));
        let expected_x = c.x + 0.1 + BLOCK_HALF + PUSHER_RADIUS;
        assert!((scene.object.position.x - expected_x).abs() < 1e-9);
        assert!((scene.object.position.y - c.y).abs() < 1e-12);
    }

    #[test]
    fn success_boundaries_are_strict() {
        let spec = TaskSpec::default_for(TaskKind::Reach);
        let mut scene = Scene::reset(&spec, 0).unwrap();
        assert!(!scene.is_success(&spec));
        let m = scene.object.position;
        scene.robot.position = m + Vector3::new(spec.reach_tolerance, 0.0, 0.0);
        assert!(!scene.is_success(&spec));
        scene.robot.position = m + Vector3::new(spec.reach_tolerance * 0.99, 0.0, 0.0);
        assert!(scene.is_success(&spec));

        let spec = TaskSpec::default_for(TaskKind::PickPlace);
        let mut scene = Scene::reset(&spec, 0).unwrap();
        assert!(!scene.is_success(&spec));
        let centroid_offset = scene.object_centroid() - scene.object.position;
        let zone = Point3::new(spec.zone_center[0], spec.zone_center[1], BLOCK_HALF);
        scene.object.position = zone - centroid_offset;
        assert!(scene.is_success(&spec));
        let edge = spec.zone_half_size + spec.zone_tolerance;
        scene.object.position = zone - centroid_offset + Vector3::new(edge, 0.0, 0.0);
        assert!(!scene.is_success(&spec));
    }

    proptest! {
        #[test]
        fn attached_block_keeps_distances(
            moves in prop::collection::vec((prop::array::uniform3(-0.1f64..0.1), -1.0f64..1.0), 1..10)
        ) {
            let spec = TaskSpec::default_for(TaskKind::PickPlace);
            let mut scene = Scene::reset(&spec, 7).unwrap();
            let c = scene.object.position;
            scene.step(&act(&scene, c, false));
            scene.step(&act(&scene, c, true));
            prop_assert!(scene.attached.is_some());
            let dist = |s: &Scene| -> Vec<f64> {
                let pts = s.object_points();
                pts.iter().map(|p| (p - s.robot.position).norm())
                    .chain(pts.iter().flat_map(|a| pts.iter().map(move |b| (a - b).norm())))
                    .collect()
            };
            let reference = dist(&scene);
            for (d, yaw) in moves {
                let p = Point3::new(0.5 + d[0], d[1], 0.2 + d[2]);
                let q = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw) * RobotConfig::default().base();
                scene.step(&Action { pose: Pose::new(p, q), gripper_closed: true });
                for (a, b) in dist(&scene).iter().zip(&reference) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}

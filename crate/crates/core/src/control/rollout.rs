use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{backtrack_action, Action, ChunkBuffer, ControlConfig, ControlError, Workspace};
use crate::dataio::{DemoHeader, Demonstration, Frame, KeypointSpec, Role, TaskSchema};
use crate::geometry::Point3;
use crate::policy::{ActionChunk, ChunkStep, KeypointObservation, ObservationWindow, PolicyParameters};
use crate::retarget::{OffsetTable, RobotConfig};

/// Anything that maps an observation window to a chunk of future keypoints.
pub trait ChunkPolicy {
    /// Number of past observations consumed per call.
    fn history(&self) -> usize;
    fn predict(&mut self, window: &ObservationWindow, step: usize) -> Result<ActionChunk, ControlError>;
}

impl ChunkPolicy for PolicyParameters {
    fn history(&self) -> usize {
        self.model.history
    }

    fn predict(&mut self, window: &ObservationWindow, _step: usize) -> Result<ActionChunk, ControlError> {
        Ok(self.forward(window)?)
    }
}

/// World interface for closed-loop control. Each `apply` advances simulated
/// time by one control interval.
pub trait Environment {
    fn observe(&mut self) -> Result<KeypointObservation, ControlError>;
    fn apply(&mut self, action: &Action) -> Result<(), ControlError>;
    fn is_success(&self) -> bool;
    /// Task-specific distance to the goal (meters).
    fn task_error(&self) -> f64;
}

/// Replays a fixed sequence of robot keypoints and gripper states, indexed
/// by control step. Entries past the end repeat the last one.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    plan: Vec<(Vec<Point3>, bool)>,
    chunk: usize,
}

impl ReplayPolicy {
    pub fn new(plan: Vec<(Vec<Point3>, bool)>, chunk: usize) -> Self {
        assert!(!plan.is_empty() && chunk > 0, "replay needs a plan and a chunk length");
        Self { plan, chunk }
    }

    pub fn plan_len(&self) -> usize {
        self.plan.len()
    }
}

impl ChunkPolicy for ReplayPolicy {
    fn history(&self) -> usize {
        1
    }

    fn predict(&mut self, _window: &ObservationWindow, step: usize) -> Result<ActionChunk, ControlError> {
        let last = self.plan.len() - 1;
        let steps = (1..=self.chunk)
            .map(|i| {
                let (points, closed) = &self.plan[(step + i).min(last)];
                ChunkStep {
                    points: points.clone(),
                    gripper_logit: if *closed { 20.0 } else { -20.0 },
                }
            })
            .collect();
        Ok(ActionChunk { steps })
    }
}

/// Everything the loop needs besides the policy and the environment.
#[derive(Debug, Clone)]
pub struct RolloutSettings {
    pub decay: f64,
    pub workspace: Workspace,
    pub offsets: OffsetTable,
    pub base: UnitQuaternion<f64>,
}

impl RolloutSettings {
    pub fn new(control: &ControlConfig, robot: &RobotConfig) -> Self {
        Self {
            decay: control.ensemble_decay,
            workspace: control.workspace,
            offsets: robot.offsets(),
            base: robot.base(),
        }
    }
}

/// One iteration of the control loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub step: usize,
    pub observation: KeypointObservation,
    pub action: Action,
    pub gripper_probability: f64,
    pub weights: Vec<f64>,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub steps: Vec<RolloutStep>,
    /// Observation after the last action.
    pub final_observation: Option<KeypointObservation>,
    pub success: bool,
    pub final_error: f64,
    pub clamps: usize,
}

/// Summary row written next to rollout trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub success: bool,
    pub steps: usize,
    pub final_error: f64,
}

impl RolloutResult {
    pub fn record(&self) -> RolloutRecord {
        RolloutRecord {
            success: self.success,
            steps: self.steps.len(),
            final_error: self.final_error,
        }
    }

    /// Commanded end-effector positions, one per step.
    pub fn positions(&self) -> Vec<Point3> {
        self.steps.iter().map(|s| s.action.pose.position).collect()
    }

    /// Observed keypoints as a demonstration with 3D points and gripper
    /// states, one frame per control step plus the final observation.
    pub fn to_demonstration(&self, schema: &TaskSchema, rate_hz: f64) -> Demonstration {
        let keypoints = schema
            .robot
            .iter()
            .map(|n| KeypointSpec::new(n, Role::Robot))
            .chain(schema.object.iter().map(|n| KeypointSpec::new(n, Role::Object)))
            .collect();
        let observations = self
            .steps
            .iter()
            .map(|s| &s.observation)
            .chain(self.final_observation.as_ref());
        let frames = observations
            .enumerate()
            .map(|(i, o)| Frame {
                t: i as f64 / rate_hz,
                views: vec![],
                points: Some(o.robot.iter().chain(&o.object).map(|p| [p.x, p.y, p.z]).collect()),
                gripper: Some(o.gripper_closed),
            })
            .collect();
        Demonstration {
            header: DemoHeader::new(&schema.task, rate_hz, keypoints, vec![]),
            frames,
        }
    }
}

/// Runs the closed loop for `max_steps` actions: observe, predict a chunk,
/// ensemble every chunk covering the next step, backtrack to a pose, clamp
/// into the workspace and apply. Success is judged on the final state.
pub fn rollout(
    policy: &mut dyn ChunkPolicy,
    env: &mut dyn Environment,
    settings: &RolloutSettings,
    max_steps: usize,
) -> Result<RolloutResult, ControlError> {
    let mut buffer = ChunkBuffer::new(settings.decay);
    let mut history: Vec<KeypointObservation> = Vec::new();
    let mut steps = Vec::with_capacity(max_steps);
    let mut clamps = 0;
    for step in 0..max_steps {
        let observation = env.observe()?;
        history.push(observation.clone());
        let window = ObservationWindow::from_history(&history, policy.history());
        let chunk = policy.predict(&window, step)?;
        buffer.push(step, chunk)?;
        let blended = buffer.ensemble(step + 1)?;
        let mut action = backtrack_action(&blended.points, blended.gripper_closed, &settings.offsets, &settings.base)?;
        let clamped = settings.workspace.clamp(&mut action);
        clamps += usize::from(clamped);
        env.apply(&action)?;
        steps.push(RolloutStep {
            step,
            observation,
            action,
            gripper_probability: blended.gripper_probability,
            weights: blended.weights,
            clamped,
        });
    }
    let final_observation = if max_steps > 0 { Some(env.observe()?) } else { None };
    let success = max_steps > 0 && env.is_success();
    Ok(RolloutResult {
        steps,
        final_observation,
        success,
        final_error: env.task_error(),
        clamps,
    })
}

/// Variance of the per-step position increments: mean squared deviation of
/// each increment vector from their mean. Zero for fewer than two increments.
pub fn increment_variance(positions: &[Point3]) -> f64 {
    let deltas: Vec<Vector3<f64>> = positions.windows(2).map(|w| w[1] - w[0]).collect();
    if deltas.len() < 2 {
        return 0.0;
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<Vector3<f64>>() / n;
    deltas.iter().map(|d| (d - mean).norm_squared()).sum::<f64>() / n
}

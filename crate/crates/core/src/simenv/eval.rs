use serde::{Deserialize, Serialize};

use super::expert::{scripted_expert, EXPERT_RATE_HZ};
use super::observe::{lift_with_sensor_depth, observe_points, LiftingMode, NoiseModel};
use super::scene::Scene;
use super::task::TaskSpec;
use super::{scene_seed, SimError, EVAL_STREAM};
use crate::control::{
    rollout, Action, ChunkPolicy, ControlConfig, ControlError, Environment, ReplayPolicy, RolloutResult,
    RolloutSettings,
};
use crate::dataio::PixelObs;
use crate::geometry::{triangulate_dlt, CameraModel, Point2, Point3};
use crate::policy::{KeypointObservation, PolicyParameters};
use crate::retarget::{lift_track, pose_to_keypoints, OffsetTable, RobotConfig};

/// Closed-loop view of a [`Scene`]: robot keypoints from proprioception,
/// object keypoints lifted from the noisy camera views.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub scene: Scene,
    pub spec: TaskSpec,
    cameras: Vec<CameraModel>,
    noise: NoiseModel,
    lifting: LiftingMode,
    offsets: OffsetTable,
    last_object: Option<Vec<Point3>>,
    /// Simulated seconds elapsed.
    pub time: f64,
    interval: f64,
}

impl SimEnv {
    pub fn new(
        scene: Scene,
        spec: TaskSpec,
        cameras: Vec<CameraModel>,
        noise: NoiseModel,
        lifting: LiftingMode,
        robot: &RobotConfig,
        control_hz: f64,
    ) -> Self {
        Self {
            scene,
            spec,
            cameras,
            noise,
            lifting,
            offsets: robot.offsets(),
            last_object: None,
            time: 0.0,
            interval: 1.0 / control_hz,
        }
    }

    fn lift_objects(&mut self) -> Result<Vec<Point3>, SimError> {
        let truth = self.scene.object_points();
        let with_depth = self.lifting == LiftingMode::Sensor;
        let views = observe_points(&truth, &self.cameras, &self.noise, with_depth, &mut self.scene.rng)?;
        let fresh: Vec<Point3> = match self.lifting {
            LiftingMode::Triangulated => (0..truth.len())
                .map(|k| {
                    let pixels: Vec<Point2> = views.iter().map(|v| Point2::new(v[k].u, v[k].v)).collect();
                    triangulate_dlt(&self.cameras, &pixels)
                })
                .collect::<Result<_, _>>()?,
            LiftingMode::Sensor => lift_with_sensor_depth(&views, &self.cameras)?,
        };
        let hidden = |k: usize| match self.lifting {
            LiftingMode::Triangulated => views.iter().any(|v| v[k].occluded),
            LiftingMode::Sensor => views[0][k].occluded,
        };
        let lifted = match &self.last_object {
            Some(last) => (0..truth.len()).map(|k| if hidden(k) { last[k] } else { fresh[k] }).collect(),
            None => fresh,
        };
        self.last_object = Some(lifted.clone());
        Ok(lifted)
    }
}

impl Environment for SimEnv {
    fn observe(&mut self) -> Result<KeypointObservation, ControlError> {
        let object = self.lift_objects().map_err(|e| ControlError::Environment(e.to_string()))?;
        Ok(KeypointObservation {
            robot: pose_to_keypoints(&self.scene.robot, &self.offsets),
            object,
            gripper_closed: self.scene.gripper_closed,
        })
    }

    fn apply(&mut self, action: &Action) -> Result<(), ControlError> {
        let finite = action.pose.position.coords.iter().all(|c| c.is_finite())
            && action.pose.orientation().coords.iter().all(|c| c.is_finite());
        if !finite {
            return Err(ControlError::Environment("non-finite action".into()));
        }
        self.scene.step(action);
        self.time += self.interval;
        Ok(())
    }

    fn is_success(&self) -> bool {
        self.scene.is_success(&self.spec)
    }

    fn task_error(&self) -> f64 {
        self.scene.task_error(&self.spec)
    }
}

/// What drives the robot during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Learned(&'a PolicyParameters),
    /// The scripted expert for each trial's scene, replayed through backtracking.
    Expert,
}

/// Everything besides the policy and task that shapes an evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub trials: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    pub lifting: LiftingMode,
    pub cameras: Vec<CameraModel>,
    pub control: ControlConfig,
    pub robot: RobotConfig,
    /// Frame stride between the expert's recording rate and control steps.
    pub expert_stride: usize,
}

/// One evaluation episode; serialized as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub task: String,
    pub trial: usize,
    pub seed: u64,
    pub lifting: LiftingMode,
    pub success: bool,
    pub steps: usize,
    pub final_error: f64,
    pub clamps: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<TrialRecord>,
    pub rollouts: Vec<RolloutResult>,
}

impl EvalReport {
    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }

    pub fn trials(&self) -> usize {
        self.records.len()
    }

    /// Fraction of successful trials; zero when no trials ran.
    pub fn rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.successes() as f64 / self.trials() as f64
        }
    }
}

/// Runs `options.trials` independent seeded episodes of `spec`.
pub fn evaluate(policy: EvalPolicy<'_>, spec: &TaskSpec, options: &EvalOptions) -> Result<EvalReport, SimError> {
    spec.validate()?;
    options.noise.validate()?;
    let settings = RolloutSettings::new(&options.control, &options.robot);
    let mut learned = match policy {
        EvalPolicy::Learned(p) => Some(p.clone()),
        EvalPolicy::Expert => None,
    };
    let mut report = EvalReport {
        records: Vec::with_capacity(options.trials),
        rollouts: Vec::with_capacity(options.trials),
    };
    for trial in 0..options.trials {
        let seed = scene_seed(options.seed, EVAL_STREAM, trial as u64);
        let scene = Scene::reset(spec, seed)?;
        let mut replay;
        let driver: &mut dyn ChunkPolicy = match learned.as_mut() {
            Some(p) => p,
            None => {
                let expert = scripted_expert(spec, &scene)?;
                replay = ReplayPolicy::new(expert.control_plan(options.expert_stride, &settings.offsets), 20);
                &mut replay
            }
        };
        let mut env = SimEnv::new(
            scene,
            spec.clone(),
            options.cameras.clone(),
            options.noise,
            options.lifting,
            &options.robot,
            options.control.control_hz,
        );
        let result = rollout(driver, &mut env, &settings, spec.max_steps)?;
        log::debug!("trial {trial} (seed {seed}): success {}", result.success);
        report.records.push(TrialRecord {
            task: spec.kind.name().to_string(),
            trial,
            seed,
            lifting: options.lifting,
            success: result.success,
            steps: result.steps.len(),
            final_error: result.final_error,
            clamps: result.clamps,
        });
        report.rollouts.push(result);
    }
    Ok(report)
}

/// Lifts every keypoint track of a two-view frame sequence; `views[frame][view][point]`.
pub fn lift_frames(cameras: &[CameraModel], views: &[Vec<Vec<PixelObs>>]) -> Result<Vec<Vec<Point3>>, SimError> {
    let n_points = views.first().and_then(|f| f.first()).map_or(0, |v| v.len());
    let tracks = (0..n_points)
        .map(|k| {
            let track: Vec<Vec<_>> = views.iter().map(|f| f.iter().map(|v| v[k]).collect()).collect();
            lift_track(cameras, &track)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..views.len()).map(|t| tracks.iter().map(|tr| tr[t]).collect()).collect())
}

impl EvalOptions {
    pub fn new(trials: usize, seed: u64, cameras: Vec<CameraModel>) -> Self {
        Self {
            trials,
            seed,
            noise: NoiseModel::default(),
            lifting: LiftingMode::Triangulated,
            cameras,
            control: ControlConfig::default(),
            robot: RobotConfig::default(),
            expert_stride: (EXPERT_RATE_HZ / 6.0).round() as usize,
        }
    }
}

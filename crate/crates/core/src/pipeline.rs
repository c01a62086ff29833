//! End-to-end glue: scripted demonstrations, retargeting, dataset assembly,
//! training and evaluation driven by one [`Config`].

use thiserror::Error;

use crate::dataio::{build_dataset, subsample, Config, DataError, Demonstration};
use crate::policy::{train, PolicyError, PolicyParameters, TrainOutcome};
use crate::retarget::{retarget_demo, RetargetError};
use crate::simenv::{render_demo, scene_seed, EvalOptions, LiftingMode, SimError, TaskSpec, DEMO_STREAM};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Renders `count` scripted two-view hand demonstrations of the configured task.
pub fn generate_demos(config: &Config, count: usize) -> Result<Vec<Demonstration>, PipelineError> {
    let spec = config.task.to_spec()?;
    let cameras = config.camera_records();
    (0..count)
        .map(|i| {
            let seed = scene_seed(config.seed, DEMO_STREAM, i as u64);
            Ok(render_demo(&spec, seed, &cameras, &config.noise)?.0)
        })
        .collect()
}

/// Triangulates and retargets hand demonstrations to robot keypoints, then
/// subsamples them to the policy rate.
pub fn prepare_demos(config: &Config, hand_demos: &[Demonstration]) -> Result<Vec<Demonstration>, PipelineError> {
    let fallback = config.camera_models()?;
    hand_demos
        .iter()
        .map(|d| {
            let cameras = if d.header.cameras.is_empty() { fallback.clone() } else { d.cameras()? };
            let robot = retarget_demo(d, &cameras, &config.robot)?;
            Ok(subsample(&robot, config.data.subsample_stride))
        })
        .collect()
}

/// Behavior cloning on retargeted demonstrations with the configured model and optimizer.
pub fn train_on_demos(
    config: &Config,
    robot_demos: &[Demonstration],
    on_checkpoint: &mut dyn FnMut(u64, &PolicyParameters) -> Result<(), PolicyError>,
) -> Result<TrainOutcome, PipelineError> {
    let dataset = build_dataset(robot_demos, &config.data)?;
    Ok(train(&dataset, &config.model, &config.train, on_checkpoint)?)
}

/// Generates, retargets and trains in one call.
pub fn train_from_scratch(config: &Config, demos: usize) -> Result<TrainOutcome, PipelineError> {
    let hand = generate_demos(config, demos)?;
    let robot = prepare_demos(config, &hand)?;
    train_on_demos(config, &robot, &mut |_, _| Ok(()))
}

/// Evaluation settings derived from the config.
pub fn eval_options(config: &Config, trials: usize, lifting: LiftingMode) -> Result<EvalOptions, PipelineError> {
    let mut options = EvalOptions::new(trials, config.seed, config.camera_models()?);
    options.noise = config.noise;
    options.lifting = lifting;
    options.control = config.control;
    options.robot = config.robot.clone();
    options.expert_stride = config.data.subsample_stride;
    Ok(options)
}

pub fn task_spec(config: &Config) -> Result<TaskSpec, PipelineError> {
    Ok(config.task.to_spec()?)
}

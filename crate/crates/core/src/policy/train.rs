use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bc_loss, ChunkTargets, LossWeights};
use super::network::{BatchInput, PolicyNetwork};
use super::optim::Adam;
use super::params::PolicyParameters;
use super::{ModelConfig, PolicyError, TrainConfig};
use crate::dataio::{history_indices, target_indices, Dataset, NormStats, SampleRef, TrackDemo};

/// Loss of one optimization step (measured before the update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
    pub track_mse: f64,
    pub gripper_bce: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub curve: Vec<LossRecord>,
    /// `(step, loss)` on the validation split, at each checkpoint and at the end.
    pub val_curve: Vec<(u64, f64)>,
}

/// Demo tracks normalized once up front, laid out `[frame][keypoint][axis]`.
struct NormalizedDemo {
    len: usize,
    keypoints: usize,
    points: Vec<f32>,
    gripper: Vec<f32>,
}

impl NormalizedDemo {
    fn new(demo: &TrackDemo, stats: &NormStats) -> Self {
        let keypoints = demo.keypoint_count();
        let mut points = Vec::with_capacity(demo.len() * keypoints * 3);
        for t in 0..demo.len() {
            for p in demo.frame_points(t) {
                points.extend(stats.normalize(p).iter().map(|&v| v as f32));
            }
        }
        Self {
            len: demo.len(),
            keypoints,
            points,
            gripper: demo.gripper.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn point(&self, t: usize, k: usize) -> &[f32] {
        let start = (t * self.keypoints + k) * 3;
        &self.points[start..start + 3]
    }
}

fn assemble(
    demos: &[NormalizedDemo],
    refs: &[SampleRef],
    model: &ModelConfig,
    robot_points: usize,
) -> (BatchInput<f32>, ChunkTargets<f32>) {
    let k = demos[0].keypoints;
    let (h, l) = (model.history, model.chunk);
    let b = refs.len();
    let mut points = Array2::zeros((b * k, 3 * h));
    let mut gripper = Array1::zeros(b);
    let mut tracks = Array2::zeros((b * robot_points, 3 * l));
    let mut grip_target = Array2::zeros((b, l));
    for (i, r) in refs.iter().enumerate() {
        let d = &demos[r.demo];
        for (slot, &f) in history_indices(r.frame, h).iter().enumerate() {
            for kp in 0..k {
                let p = d.point(f, kp);
                for a in 0..3 {
                    points[(i * k + kp, 3 * slot + a)] = p[a];
                }
            }
        }
        gripper[i] = d.gripper[r.frame];
        for (slot, &f) in target_indices(r.frame, l, d.len).iter().enumerate() {
            for rp in 0..robot_points {
                let p = d.point(f, rp);
                for a in 0..3 {
                    tracks[(i * robot_points + rp, 3 * slot + a)] = p[a];
                }
            }
            grip_target[(i, slot)] = d.gripper[f];
        }
    }
    (
        BatchInput { points, gripper },
        ChunkTargets {
            tracks,
            gripper: grip_target,
        },
    )
}

fn mean_loss(
    net: &PolicyNetwork<f32>,
    demos: &[NormalizedDemo],
    refs: &[SampleRef],
    model: &ModelConfig,
    robot_points: usize,
    weights: LossWeights,
) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    for batch in refs.chunks(256) {
        let (input, target) = assemble(demos, batch, model, robot_points);
        let out = net.forward(&input)?;
        total += f64::from(bc_loss(&out, &target, weights)?.total) * batch.len() as f64;
    }
    Ok(total / refs.len().max(1) as f64)
}

/// Behavior cloning with minibatch Adam. Runs with the same dataset, model
/// and config are bit-identical. `on_checkpoint` is called every
/// `config.checkpoint_every` steps with the current parameters.
pub fn train(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(u64, &PolicyParameters) -> Result<(), PolicyError>,
) -> Result<TrainOutcome, PolicyError> {
    config.validate()?;
    model.validate()?;
    if dataset.samples.is_empty() || dataset.train.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = PolicyParameters::init(*model, dataset.schema.clone(), dataset.stats.clone(), &mut rng)?;
    let nr = dataset.schema.robot.len();
    let train_demos: Vec<NormalizedDemo> = dataset
        .train
        .iter()
        .map(|d| NormalizedDemo::new(d, &dataset.stats))
        .collect();
    let val_demos: Vec<NormalizedDemo> = dataset
        .val
        .iter()
        .map(|d| NormalizedDemo::new(d, &dataset.stats))
        .collect();
    let weights = config.loss_weights();
    let mut adam = Adam::new(config.adam(), &params.network);
    let mut curve = Vec::with_capacity(config.steps as usize);
    let mut val_curve = Vec::new();
    let mut batch = Vec::with_capacity(config.batch_size);

    for step in 1..=config.steps {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(dataset.samples[rng.random_range(0..dataset.samples.len())]);
        }
        let (input, target) = assemble(&train_demos, &batch, model, nr);
        let (out, cache) = params.network.forward_with_cache(&input)?;
        let loss = bc_loss(&out, &target, weights)?;
        if !loss.total.is_finite() {
            return Err(PolicyError::Diverged(step));
        }
        let grads = params.network.backward(&input, &cache, &loss.grad);
        adam.update(&mut params.network, &grads);
        curve.push(LossRecord {
            step,
            loss: f64::from(loss.total),
            track_mse: f64::from(loss.track_mse),
            gripper_bce: f64::from(loss.gripper_bce),
        });
        if step % 1000 == 0 {
            log::info!("step {step}: loss {:.5}", loss.total);
        }
        let checkpoint_due = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        if checkpoint_due || step == config.steps {
            if !dataset.val_samples.is_empty() {
                let v = mean_loss(&params.network, &val_demos, &dataset.val_samples, model, nr, weights)?;
                val_curve.push((step, v));
            }
        }
        if checkpoint_due {
            on_checkpoint(step, &params)?;
        }
    }
    Ok(TrainOutcome {
        params,
        curve,
        val_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{build_dataset, DataConfig, DemoHeader, Demonstration, Frame, KeypointSpec, Role};

    fn line_demo(n: usize) -> Demonstration {
        let keypoints = vec![
            KeypointSpec::new("wrist", Role::Robot),
            KeypointSpec::new("tip", Role::Robot),
            KeypointSpec::new("goal", Role::Object),
        ];
        let frames = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                Frame {
                    t: i as f64 * 0.15,
                    views: vec![],
                    points: Some(vec![
                        [0.5 - 0.1 * s, 0.1 * s, 0.3 - 0.2 * s],
                        [0.54 - 0.1 * s, 0.1 * s, 0.3 - 0.2 * s],
                        [0.4, 0.1, 0.1],
                    ]),
                    gripper: Some(i > n / 2),
                }
            })
            .collect();
        Demonstration {
            header: DemoHeader::new("reach", 6.0, keypoints, vec![]),
            frames,
        }
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            hidden: 32,
            layers: 1,
            heads: 2,
            ffn: 32,
            history: 4,
            chunk: 5,
        }
    }

    #[test]
    fn batches_follow_window_and_target_rules() {
        let ds = build_dataset(&[line_demo(6)], &DataConfig::default()).unwrap();
        let demos: Vec<NormalizedDemo> = ds.train.iter().map(|d| NormalizedDemo::new(d, &ds.stats)).collect();
        let model = tiny_model();
        let refs = [SampleRef { demo: 0, frame: 1 }, SampleRef { demo: 0, frame: 4 }];
        let (input, target) = assemble(&demos, &refs, &model, 2);
        // first sample: history frames [0, 0, 0, 1]
        let wrist0 = demos[0].point(0, 0)[0];
        let wrist1 = demos[0].point(1, 0)[0];
        assert_eq!(input.points[(0, 0)], wrist0);
        assert_eq!(input.points[(0, 6)], wrist0);
        assert_eq!(input.points[(0, 9)], wrist1);
        // second sample: targets [5, 5, 5, 5, 5] (end repetition)
        let last = demos[0].point(5, 1)[2];
        for l in 0..5 {
            assert_eq!(target.tracks[(3, 3 * l + 2)], last);
            assert_eq!(target.gripper[(1, l)], 1.0);
        }
        assert_eq!(input.gripper[0], 0.0);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let ds = build_dataset(&[line_demo(8)], &DataConfig::default()).unwrap();
        let cfg = TrainConfig { steps: 0, seed: 3, ..TrainConfig::default() };
        let out = train(&ds, &tiny_model(), &cfg, &mut |_, _| Ok(())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = PolicyParameters::init(tiny_model(), ds.schema.clone(), ds.stats.clone(), &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert!(out.curve.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical_and_checkpoints_fire() {
        let ds = build_dataset(&[line_demo(8)], &DataConfig::default()).unwrap();
        let cfg = TrainConfig { steps: 30, batch_size: 8, checkpoint_every: 10, ..TrainConfig::default() };
        let mut seen = Vec::new();
        let a = train(&ds, &tiny_model(), &cfg, &mut |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        let b = train(&ds, &tiny_model(), &cfg, &mut |_, _| Ok(())).unwrap();
        assert_eq!(seen, vec![10, 20, 30]);
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve, b.curve);
        let c = train(&ds, &tiny_model(), &TrainConfig { seed: 1, ..cfg }, &mut |_, _| Ok(())).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn overfits_a_single_demo() {
        let ds = build_dataset(&[line_demo(20)], &DataConfig::default()).unwrap();
        let cfg = TrainConfig { steps: 2000, batch_size: 16, checkpoint_every: 0, ..TrainConfig::default() };
        let out = train(&ds, &tiny_model(), &cfg, &mut |_, _| Ok(())).unwrap();
        let initial = out.curve[..10].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        let last = out.curve[out.curve.len() - 10..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(last < 0.01 * initial, "initial {initial}, final {last}");
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = build_dataset(&[line_demo(4)], &DataConfig::default()).unwrap();
        let mut empty = ds.clone();
        empty.samples.clear();
        assert!(matches!(
            train(&empty, &tiny_model(), &TrainConfig::default(), &mut |_, _| Ok(())),
            Err(PolicyError::EmptyDataset)
        ));
    }
}

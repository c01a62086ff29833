use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::DataConfig;
use super::demo::Demonstration;
use super::schema::{Role, TaskSchema};
use super::DataError;
use crate::geometry::Point3;

/// Lower bound on stored standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-axis mean and standard deviation pooled over every keypoint, so robot
/// and object points share one normalized frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormStats {
    /// Statistics over every keypoint of every frame of every demo.
    pub fn from_demos(demos: &[TrackDemo]) -> Result<Self, DataError> {
        let mut sum = [0.0; 3];
        let mut count = 0usize;
        for d in demos {
            for t in 0..d.len() {
                for p in d.frame_points(t) {
                    for a in 0..3 {
                        sum[a] += p[a];
                    }
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(DataError::EmptyDataset);
        }
        let n = count as f64;
        let mean = sum.map(|v| v / n);
        let mut sq = [0.0; 3];
        for d in demos {
            for t in 0..d.len() {
                for p in d.frame_points(t) {
                    for a in 0..3 {
                        let c = p[a] - mean[a];
                        sq[a] += c * c;
                    }
                }
            }
        }
        let std = sq.map(|v| (v / n).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, p: &Point3) -> [f64; 3] {
        let (m, s) = (self.mean, self.std);
        [(p.x - m[0]) / s[0], (p.y - m[1]) / s[1], (p.z - m[2]) / s[2]]
    }

    pub fn denormalize(&self, v: [f64; 3]) -> Point3 {
        let (m, s) = (self.mean, self.std);
        Point3::new(v[0] * s[0] + m[0], v[1] * s[1] + m[1], v[2] * s[2] + m[2])
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.std.iter().all(|v| v.is_finite() && *v >= STD_FLOOR)
    }
}

/// A demonstration reduced to 3D robot points, object points and gripper state per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackDemo {
    pub robot: Vec<Vec<Point3>>,
    pub object: Vec<Vec<Point3>>,
    pub gripper: Vec<bool>,
}

impl TrackDemo {
    pub fn len(&self) -> usize {
        self.gripper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gripper.is_empty()
    }

    pub fn keypoint_count(&self) -> usize {
        self.robot.first().map_or(0, Vec::len) + self.object.first().map_or(0, Vec::len)
    }

    /// Robot points then object points of frame `t`.
    pub fn frame_points(&self, t: usize) -> impl Iterator<Item = &Point3> {
        self.robot[t].iter().chain(self.object[t].iter())
    }

    /// Extracts robot/object tracks; every frame must carry 3D points and a gripper state.
    pub fn from_demonstration(demo: &Demonstration) -> Result<Self, DataError> {
        let robot_idx = demo.indices_of(Role::Robot);
        let object_idx = demo.indices_of(Role::Object);
        if robot_idx.is_empty() {
            return Err(DataError::SchemaViolation("demo has no robot keypoints".into()));
        }
        let mut out = TrackDemo {
            robot: Vec::with_capacity(demo.frames.len()),
            object: Vec::with_capacity(demo.frames.len()),
            gripper: Vec::with_capacity(demo.frames.len()),
        };
        for (i, f) in demo.frames.iter().enumerate() {
            let (Some(points), Some(gripper)) = (&f.points, f.gripper) else {
                return Err(DataError::SchemaViolation(format!(
                    "frame {i} lacks 3D points or gripper state"
                )));
            };
            let take = |idx: &[usize]| idx.iter().map(|&k| Point3::from(points[k])).collect();
            out.robot.push(take(&robot_idx));
            out.object.push(take(&object_idx));
            out.gripper.push(gripper);
        }
        Ok(out)
    }
}

/// Index of one training sample: the window ending at `frame` of demo `demo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub demo: usize,
    pub frame: usize,
}

/// Frames feeding the history window ending at `t`, oldest first. Indices
/// before the start are clamped to 0 (front padding with the first frame).
pub fn history_indices(t: usize, history: usize) -> Vec<usize> {
    (0..history).map(|i| (t + i + 1).saturating_sub(history)).collect()
}

/// Frames `t+1 ..= t+chunk`, clamped to the last frame (end repetition).
pub fn target_indices(t: usize, chunk: usize, len: usize) -> Vec<usize> {
    (1..=chunk).map(|i| (t + i).min(len.saturating_sub(1))).collect()
}

/// Seeded split of `n` demos into `(train, val)` index lists. At least one
/// demo always stays in the training split.
pub fn split_demos(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction).floor() as usize).min(n.saturating_sub(1));
    let mut val = order.split_off(n - n_val);
    let mut train = order;
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: TaskSchema,
    pub train: Vec<TrackDemo>,
    pub val: Vec<TrackDemo>,
    /// Computed from the training split only.
    pub stats: NormStats,
    pub split_seed: u64,
    /// One sample per training frame.
    pub samples: Vec<SampleRef>,
    pub val_samples: Vec<SampleRef>,
}

fn sample_index(demos: &[TrackDemo]) -> Vec<SampleRef> {
    demos
        .iter()
        .enumerate()
        .flat_map(|(d, demo)| (0..demo.len()).map(move |frame| SampleRef { demo: d, frame }))
        .collect()
}

/// Validates schemas, splits by demo, and computes normalization statistics.
pub fn build_dataset(demos: &[Demonstration], config: &DataConfig) -> Result<Dataset, DataError> {
    let first = demos.first().ok_or(DataError::EmptyDataset)?;
    let schema = first.schema();
    for (i, d) in demos.iter().enumerate() {
        d.validate()?;
        let s = d.schema();
        if s != schema {
            return Err(DataError::SchemaMismatchAcrossDemos(format!(
                "demo {i} has task {:?} robot {:?} object {:?}; demo 0 has task {:?} robot {:?} object {:?}",
                s.task, s.robot, s.object, schema.task, schema.robot, schema.object
            )));
        }
    }
    let tracks = demos
        .iter()
        .map(TrackDemo::from_demonstration)
        .collect::<Result<Vec<_>, _>>()?;
    if tracks.iter().all(TrackDemo::is_empty) {
        return Err(DataError::EmptyDataset);
    }
    let (train_idx, val_idx) = split_demos(tracks.len(), config.val_fraction, config.split_seed);
    let train: Vec<TrackDemo> = train_idx.iter().map(|&i| tracks[i].clone()).collect();
    let val: Vec<TrackDemo> = val_idx.iter().map(|&i| tracks[i].clone()).collect();
    let stats = NormStats::from_demos(&train)?;
    let samples = sample_index(&train);
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(Dataset {
        schema,
        val_samples: sample_index(&val),
        train,
        val,
        stats,
        split_seed: config.split_seed,
        samples,
    })
}

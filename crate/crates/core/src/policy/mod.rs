//! Transformer policy over keypoint tracks.

pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod optim;
mod params;
mod train;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DataError;

pub use checkpoint::{load, save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::NetworkDims;
pub use params::PolicyParameters;
pub use train::{train, LossRecord, TrainOutcome};
pub use window::{ActionChunk, ChunkStep, KeypointObservation, ObservationWindow};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error("observation does not match the policy schema: {0}")]
    SchemaMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training diverged at step {0} (non-finite loss)")]
    Diverged(u64),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Network shape independent of the task schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Observation history length in frames.
    pub history: usize,
    /// Number of future frames predicted per call.
    pub chunk: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 2,
            heads: 4,
            ffn: 256,
            history: 10,
            chunk: 20,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, robot_points: usize, object_points: usize) -> NetworkDims {
        NetworkDims {
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ffn: self.ffn,
            history: self.history,
            chunk: self.chunk,
            robot_points,
            object_points,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.dims(1, 0).validate()
    }
}

/// Optimization settings for behavior cloning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub track_weight: f64,
    pub gripper_weight: f64,
    /// Emit a checkpoint every this many steps (0 disables).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            steps: 20_000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            track_weight: 1.0,
            gripper_weight: 0.1,
            checkpoint_every: 5_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let positive = [("lr", self.lr), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PolicyError::InvalidConfig(format!("train.{name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(PolicyError::InvalidConfig(format!("train.{name} must lie in [0, 1)")));
            }
        }
        for (name, v) in [("track_weight", self.track_weight), ("gripper_weight", self.gripper_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PolicyError::InvalidConfig(format!("train.{name} must be non-negative")));
            }
        }
        if self.batch_size == 0 {
            return Err(PolicyError::InvalidConfig("train.batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> optim::AdamConfig {
        optim::AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn loss_weights(&self) -> loss::LossWeights {
        loss::LossWeights {
            track: self.track_weight,
            gripper: self.gripper_weight,
        }
    }
}

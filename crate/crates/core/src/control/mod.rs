//! From predicted point tracks to executable actions: temporal ensembling,
//! pose backtracking and the closed-loop rollout.

mod action;
mod ensemble;
mod rollout;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::policy::PolicyError;

pub use action::{backtrack_action, backtrack_pose, roundtrip_check, Action, RoundtripReport, Workspace};
pub use ensemble::{ChunkBuffer, EnsembleOutput};
pub use rollout::{
    increment_variance, rollout, ChunkPolicy, Environment, ReplayPolicy, RolloutRecord, RolloutResult, RolloutSettings,
    RolloutStep,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("no buffered chunk covers step {0}")]
    NoCoverage(usize),
    #[error("chunk emitted at step {got} after a chunk from step {last}")]
    OutOfOrder { last: usize, got: usize },
    #[error("expected {expected} points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("degenerate keypoint configuration: {0}")]
    Degenerate(#[from] GeometryError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("environment error: {0}")]
    Environment(String),
}

/// Deployment settings for closed-loop control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Exponential weight per step of chunk age.
    pub ensemble_decay: f64,
    pub workspace: Workspace,
    pub control_hz: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            ensemble_decay: 0.1,
            workspace: Workspace::default(),
            control_hz: 6.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ensemble_decay >= 0.0) {
            return Err("control.ensemble_decay must be non-negative".into());
        }
        if !(self.control_hz > 0.0 && self.control_hz.is_finite()) {
            return Err("control.control_hz must be positive".into());
        }
        self.workspace.validate()
    }

    /// Simulated seconds between actions.
    pub fn interval(&self) -> f64 {
        1.0 / self.control_hz
    }
}

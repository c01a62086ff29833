use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::control::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Reach,
    PushBlock,
    PickPlace,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Reach, TaskKind::PushBlock, TaskKind::PickPlace];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Reach => "reach",
            TaskKind::PushBlock => "push-block",
            TaskKind::PickPlace => "pick-place",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown task {s:?}")))
    }
}

/// Uniform ranges for the object's spawn position (meters) and yaw (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    #[serde(default)]
    pub yaw: [f64; 2],
}

/// Fully resolved task parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub spawn: SpawnRange,
    /// Control steps per evaluation episode.
    pub max_steps: usize,
    pub workspace: Workspace,
    /// Reach: the wrist must end strictly closer than this to the marker.
    pub reach_tolerance: f64,
    /// Push: the block keypoint centroid must end strictly beyond this `x`.
    pub push_goal_x: f64,
    /// Pick-place: center and half-size of the square target zone on the table.
    pub zone_center: [f64; 2],
    pub zone_half_size: f64,
    /// Pick-place: allowed distance of the released block's centroid from the zone.
    pub zone_tolerance: f64,
    /// Distance from the grasp center to the block center within which closing grasps it.
    pub grasp_radius: f64,
}

impl TaskSpec {
    pub fn default_for(kind: TaskKind) -> Self {
        let (spawn, max_steps) = match kind {
            TaskKind::Reach => (
                SpawnRange {
                    x: [0.4, 0.6],
                    y: [-0.15, 0.15],
                    yaw: [0.0, 0.0],
                },
                25,
            ),
            TaskKind::PushBlock => (
                SpawnRange {
                    x: [0.40, 0.48],
                    y: [-0.12, 0.12],
                    yaw: [0.0, 0.0],
                },
                45,
            ),
            TaskKind::PickPlace => (
                SpawnRange {
                    x: [0.4, 0.6],
                    y: [-0.15, 0.05],
                    yaw: [-0.4, 0.4],
                },
                65,
            ),
        };
        Self {
            kind,
            spawn,
            max_steps,
            workspace: Workspace::default(),
            reach_tolerance: 0.015,
            push_goal_x: 0.62,
            zone_center: [0.55, 0.22],
            zone_half_size: 0.04,
            zone_tolerance: 0.02,
            grasp_radius: 0.03,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ws = &self.workspace;
        ws.validate().map_err(SimError::InvalidSpec)?;
        let check = |name: &str, r: [f64; 2], lo: f64, hi: f64| {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= lo && r[1] <= hi) {
                Err(SimError::InvalidSpec(format!(
                    "spawn.{name} range {r:?} must be ordered and lie within [{lo}, {hi}]"
                )))
            } else {
                Ok(())
            }
        };
        check("x", self.spawn.x, ws.min[0], ws.max[0])?;
        check("y", self.spawn.y, ws.min[1], ws.max[1])?;
        check("yaw", self.spawn.yaw, -std::f64::consts::PI, std::f64::consts::PI)?;
        if self.max_steps == 0 {
            return Err(SimError::InvalidSpec("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Task selection as written in config files; unset fields take the task defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub spawn: Option<SpawnRange>,
    pub max_steps: Option<usize>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::Reach,
            spawn: None,
            max_steps: None,
        }
    }
}

impl TaskConfig {
    pub fn to_spec(&self) -> Result<TaskSpec, SimError> {
        let mut spec = TaskSpec::default_for(self.kind);
        if let Some(spawn) = self.spawn {
            spec.spawn = spawn;
        }
        if let Some(n) = self.max_steps {
            spec.max_steps = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

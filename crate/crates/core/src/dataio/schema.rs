use serde::{Deserialize, Serialize};

/// What a tracked keypoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hand,
    Robot,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointSpec {
    pub name: String,
    pub role: Role,
}

impl KeypointSpec {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }
}

/// Ordered robot and object keypoint names a policy is trained on.
///
/// Token order inside the policy is robot points first, then object points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub task: String,
    pub robot: Vec<String>,
    pub object: Vec<String>,
}

impl TaskSchema {
    pub fn keypoint_count(&self) -> usize {
        self.robot.len() + self.object.len()
    }

    /// Builds the schema from a keypoint list, ignoring hand points.
    pub fn from_keypoints(task: &str, keypoints: &[KeypointSpec]) -> Self {
        let pick = |role| {
            keypoints
                .iter()
                .filter(|k| k.role == role)
                .map(|k| k.name.clone())
                .collect()
        };
        Self {
            task: task.to_string(),
            robot: pick(Role::Robot),
            object: pick(Role::Object),
        }
    }
}

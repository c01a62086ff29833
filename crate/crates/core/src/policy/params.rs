use ndarray::{Array1, Array2};
use rand::Rng;

use super::network::{BatchInput, BatchOutput, PolicyNetwork};
use super::window::{ActionChunk, ChunkStep, ObservationWindow};
use super::{ModelConfig, PolicyError};
use crate::dataio::{NormStats, TaskSchema};

/// Everything needed to run a trained policy: weights, the keypoint schema
/// they were trained on, and the normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub model: ModelConfig,
    pub schema: TaskSchema,
    pub stats: NormStats,
    pub network: PolicyNetwork<f32>,
}

impl PolicyParameters {
    pub fn init<R: Rng>(
        model: ModelConfig,
        schema: TaskSchema,
        stats: NormStats,
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        if !stats.is_valid() {
            return Err(PolicyError::InvalidConfig(
                "normalization statistics must be finite with positive spread".into(),
            ));
        }
        let dims = model.dims(schema.robot.len(), schema.object.len());
        let network = PolicyNetwork::init(dims, rng)?;
        Ok(Self {
            model,
            schema,
            stats,
            network,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.network.all_finite() && self.stats.is_valid()
    }

    fn check_window(&self, window: &ObservationWindow) -> Result<(), PolicyError> {
        let (nr, no, h) = (self.schema.robot.len(), self.schema.object.len(), self.model.history);
        if window.robot.len() != h || window.object.len() != h {
            return Err(PolicyError::SchemaMismatch(format!(
                "window has {} frames, policy expects {h}",
                window.robot.len()
            )));
        }
        for (r, o) in window.robot.iter().zip(&window.object) {
            if r.len() != nr || o.len() != no {
                return Err(PolicyError::SchemaMismatch(format!(
                    "frame has {} robot / {} object points, policy expects {nr} / {no}",
                    r.len(),
                    o.len()
                )));
            }
        }
        Ok(())
    }

    /// Normalized network input for a batch of windows.
    pub(crate) fn encode_windows(&self, windows: &[&ObservationWindow]) -> BatchInput<f32> {
        let k = self.schema.keypoint_count();
        let h = self.model.history;
        let mut points = Array2::zeros((windows.len() * k, 3 * h));
        let mut gripper = Array1::zeros(windows.len());
        for (b, w) in windows.iter().enumerate() {
            for t in 0..h {
                for (kp, p) in w.robot[t].iter().chain(w.object[t].iter()).enumerate() {
                    let v = self.stats.normalize(p);
                    for a in 0..3 {
                        points[(b * k + kp, 3 * t + a)] = v[a] as f32;
                    }
                }
            }
            gripper[b] = if w.gripper_closed { 1.0 } else { 0.0 };
        }
        BatchInput { points, gripper }
    }

    /// Converts raw network output for sample `b` into metric predictions.
    pub(crate) fn decode_chunk(&self, out: &BatchOutput<f32>, b: usize) -> ActionChunk {
        let nr = self.schema.robot.len();
        let steps = (0..self.model.chunk)
            .map(|l| ChunkStep {
                points: (0..nr)
                    .map(|i| {
                        let row = b * nr + i;
                        let v = [0, 1, 2].map(|a| f64::from(out.tracks[(row, 3 * l + a)]));
                        self.stats.denormalize(v)
                    })
                    .collect(),
                gripper_logit: f64::from(out.logits[(b, l)]),
            })
            .collect();
        ActionChunk { steps }
    }

    /// Predicts the next chunk of robot keypoints and gripper logits.
    pub fn forward(&self, window: &ObservationWindow) -> Result<ActionChunk, PolicyError> {
        self.check_window(window)?;
        let input = self.encode_windows(&[window]);
        let out = self.network.forward(&input)?;
        Ok(self.decode_chunk(&out, 0))
    }

    /// Predicted robot keypoints for a batch of windows.
    pub fn forward_batch(&self, windows: &[ObservationWindow]) -> Result<Vec<ActionChunk>, PolicyError> {
        for w in windows {
            self.check_window(w)?;
        }
        let refs: Vec<&ObservationWindow> = windows.iter().collect();
        let out = self.network.forward(&self.encode_windows(&refs))?;
        Ok((0..windows.len()).map(|b| self.decode_chunk(&out, b)).collect())
    }
}

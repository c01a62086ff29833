use ndarray::{Array2, Zip};

use super::network::{BatchOutput, Scalar};
use super::PolicyError;

/// Relative weights of the two behavior-cloning terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub track: f64,
    pub gripper: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            track: 1.0,
            gripper: 0.1,
        }
    }
}

/// Supervision for one batch: normalized future robot tracks plus gripper labels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkTargets<T> {
    /// Same layout as [`BatchOutput::tracks`].
    pub tracks: Array2<T>,
    /// `(batch, chunk)`.
    pub gripper: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct BcLoss<T> {
    pub total: T,
    pub track_mse: T,
    pub gripper_bce: T,
    /// `dL/d(prediction)`.
    pub grad: BatchOutput<T>,
}

/// Mean squared error over robot track coordinates plus weighted binary
/// cross-entropy over gripper logits. Only robot outputs exist, so object
/// tokens are never supervised.
pub fn bc_loss<T: Scalar>(
    prediction: &BatchOutput<T>,
    target: &ChunkTargets<T>,
    weights: LossWeights,
) -> Result<BcLoss<T>, PolicyError> {
    if prediction.tracks.dim() != target.tracks.dim() {
        return Err(PolicyError::ShapeMismatch {
            what: "track targets",
            expected: prediction.tracks.len(),
            got: target.tracks.len(),
        });
    }
    if prediction.logits.dim() != target.gripper.dim() {
        return Err(PolicyError::ShapeMismatch {
            what: "gripper targets",
            expected: prediction.logits.len(),
            got: target.gripper.len(),
        });
    }
    let n_track = T::lit(prediction.tracks.len().max(1) as f64);
    let n_grip = T::lit(prediction.logits.len().max(1) as f64);
    let w_track = T::lit(weights.track);
    let w_grip = T::lit(weights.gripper);

    let diff = &prediction.tracks - &target.tracks;
    let track_mse = diff.fold(T::zero(), |acc, d| acc + *d * *d) / n_track;
    let d_tracks = diff.mapv(|d| T::lit(2.0) * d * w_track / n_track);

    let mut bce_sum = T::zero();
    let mut d_logits = Array2::zeros(prediction.logits.raw_dim());
    Zip::from(&mut d_logits)
        .and(&prediction.logits)
        .and(&target.gripper)
        .for_each(|g, &z, &y| {
            // max(z, 0) − z·y + ln(1 + e^{−|z|})
            bce_sum = bce_sum + z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
            let p = T::one() / (T::one() + (-z).exp());
            *g = w_grip * (p - y) / n_grip;
        });
    let gripper_bce = bce_sum / n_grip;

    Ok(BcLoss {
        total: w_track * track_mse + w_grip * gripper_bce,
        track_mse,
        gripper_bce,
        grad: BatchOutput {
            tracks: d_tracks,
            logits: d_logits,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_tracks_have_zero_mse() {
        let tracks = array![[0.1, -0.4, 2.0], [1.0, 0.0, -3.0]];
        let pred = BatchOutput {
            tracks: tracks.clone(),
            logits: array![[5.0], [-5.0]],
        };
        let target = ChunkTargets {
            tracks,
            gripper: array![[1.0], [0.0]],
        };
        let loss = bc_loss(&pred, &target, LossWeights::default()).unwrap();
        assert_eq!(loss.track_mse, 0.0);
        assert!(loss.grad.tracks.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn boundary_logits_cost_ln2() {
        let pred = BatchOutput {
            tracks: Array2::<f64>::zeros((2, 3)),
            logits: Array2::zeros((2, 2)),
        };
        let target = ChunkTargets {
            tracks: Array2::zeros((2, 3)),
            gripper: array![[1.0, 0.0], [0.0, 1.0]],
        };
        let loss = bc_loss(&pred, &target, LossWeights::default()).unwrap();
        assert!((loss.gripper_bce - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss.total - 0.1 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let pred = BatchOutput {
            tracks: Array2::<f64>::zeros((2, 3)),
            logits: Array2::zeros((2, 2)),
        };
        let target = ChunkTargets {
            tracks: Array2::zeros((2, 4)),
            gripper: Array2::zeros((2, 2)),
        };
        assert!(matches!(
            bc_loss(&pred, &target, LossWeights::default()),
            Err(PolicyError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let pred = BatchOutput {
            tracks: array![[0.3f64, -1.2, 0.7, 0.05], [2.0, 0.4, -0.6, 1.1]],
            logits: array![[0.8, -2.5], [3.0, 0.1]],
        };
        let target = ChunkTargets {
            tracks: array![[0.0, -1.0, 1.0, 0.5], [1.5, 0.0, 0.0, 1.0]],
            gripper: array![[1.0, 0.0], [0.0, 1.0]],
        };
        let w = LossWeights::default();
        let base = bc_loss(&pred, &target, w).unwrap();
        let h = 1e-6;
        for idx in 0..pred.tracks.len() {
            let (r, c) = (idx / 4, idx % 4);
            let mut up = pred.clone();
            up.tracks[(r, c)] += h;
            let mut dn = pred.clone();
            dn.tracks[(r, c)] -= h;
            let fd = (bc_loss(&up, &target, w).unwrap().total - bc_loss(&dn, &target, w).unwrap().total) / (2.0 * h);
            let an = base.grad.tracks[(r, c)];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()), "track {idx}: {fd} vs {an}");
        }
        for idx in 0..pred.logits.len() {
            let (r, c) = (idx / 2, idx % 2);
            let mut up = pred.clone();
            up.logits[(r, c)] += h;
            let mut dn = pred.clone();
            dn.logits[(r, c)] -= h;
            let fd = (bc_loss(&up, &target, w).unwrap().total - bc_loss(&dn, &target, w).unwrap().total) / (2.0 * h);
            let an = base.grad.logits[(r, c)];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()), "logit {idx}: {fd} vs {an}");
        }
    }
}

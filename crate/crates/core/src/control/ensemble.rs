use std::collections::VecDeque;

use super::ControlError;
use crate::geometry::Point3;
use crate::policy::ActionChunk;

/// Blended prediction for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub points: Vec<Point3>,
    pub gripper_probability: f64,
    pub gripper_closed: bool,
    /// Normalized weight of every contributing chunk, newest first.
    pub weights: Vec<f64>,
}

/// Recent chunks with the step at which each was emitted. A chunk emitted at
/// step `s` predicts steps `s+1 ..= s+L`.
#[derive(Debug, Clone)]
pub struct ChunkBuffer {
    decay: f64,
    chunks: VecDeque<(usize, ActionChunk)>,
}

impl ChunkBuffer {
    /// `decay` is the exponential weight per step of chunk age; `f64::INFINITY`
    /// keeps only the freshest chunk.
    pub fn new(decay: f64) -> Self {
        assert!(decay >= 0.0, "ensemble decay must be non-negative");
        Self {
            decay,
            chunks: VecDeque::new(),
        }
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Emission steps currently held, oldest first.
    pub fn emission_steps(&self) -> Vec<usize> {
        self.chunks.iter().map(|(s, _)| *s).collect()
    }

    pub fn push(&mut self, emitted_at: usize, chunk: ActionChunk) -> Result<(), ControlError> {
        if let Some((last, _)) = self.chunks.back() {
            if emitted_at <= *last {
                return Err(ControlError::OutOfOrder {
                    last: *last,
                    got: emitted_at,
                });
            }
        }
        self.chunks.push_back((emitted_at, chunk));
        Ok(())
    }

    /// Drops chunks that end before `step`.
    fn prune(&mut self, step: usize) {
        while let Some((s, c)) = self.chunks.front() {
            if s + c.len() < step {
                self.chunks.pop_front();
            } else {
                break;
            }
        }
    }

    /// Weighted mean of every chunk entry that targets `step`, with weights
    /// `exp(−decay·age)` where age counts steps since the chunk was emitted
    /// relative to the freshest contributing chunk.
    pub fn ensemble(&mut self, step: usize) -> Result<EnsembleOutput, ControlError> {
        self.prune(step);
        let covering: Vec<(usize, &ActionChunk)> = self
            .chunks
            .iter()
            .rev()
            .filter(|(s, c)| *s < step && step <= s + c.len())
            .map(|(s, c)| (*s, c))
            .collect();
        let Some(&(newest, _)) = covering.first() else {
            return Err(ControlError::NoCoverage(step));
        };
        let raw: Vec<f64> = covering
            .iter()
            .map(|(s, _)| {
                let age = (newest - s) as f64;
                if age == 0.0 {
                    1.0
                } else {
                    (-self.decay * age).exp()
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

        let n_points = covering[0].1.steps[step - newest - 1].points.len();
        let mut points = vec![Point3::origin(); n_points];
        let mut prob = 0.0;
        for ((s, c), w) in covering.iter().zip(&weights) {
            let entry = &c.steps[step - s - 1];
            if entry.points.len() != n_points {
                return Err(ControlError::PointCount {
                    expected: n_points,
                    got: entry.points.len(),
                });
            }
            for (acc, p) in points.iter_mut().zip(&entry.points) {
                acc.coords += p.coords * *w;
            }
            prob += w * entry.gripper_probability();
        }
        Ok(EnsembleOutput {
            points,
            gripper_probability: prob,
            gripper_closed: prob > 0.5,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ChunkStep;
    use proptest::prelude::*;

    fn chunk(len: usize, value: f64, logit: f64) -> ActionChunk {
        ActionChunk {
            steps: (0..len)
                .map(|i| ChunkStep {
                    points: vec![Point3::new(value, value + i as f64, 0.0)],
                    gripper_logit: logit,
                })
                .collect(),
        }
    }

    #[test]
    fn single_chunk_passes_through() {
        let mut buf = ChunkBuffer::new(0.1);
        let c = chunk(5, 1.0, 2.0);
        buf.push(3, c.clone()).unwrap();
        let out = buf.ensemble(5).unwrap();
        assert_eq!(out.points, c.steps[1].points);
        assert_eq!(out.weights, vec![1.0]);
        assert!(out.gripper_closed);
    }

    #[test]
    fn identical_chunks_are_a_fixed_point() {
        let mut buf = ChunkBuffer::new(0.1);
        let c = ActionChunk {
            steps: vec![
                ChunkStep {
                    points: vec![Point3::new(0.3, -0.2, 0.1)],
                    gripper_logit: -1.0
                };
                6
            ],
        };
        for s in 0..4 {
            buf.push(s, c.clone()).unwrap();
        }
        let out = buf.ensemble(4).unwrap();
        assert!((out.points[0] - Point3::new(0.3, -0.2, 0.1)).norm() < 1e-15);
        assert!(!out.gripper_closed);
    }

    #[test]
    fn two_chunk_closed_form_weights() {
        let mut buf = ChunkBuffer::new(0.1);
        let p = chunk(4, 1.0, 0.0);
        let q = chunk(4, 2.0, 0.0);
        buf.push(0, q.clone()).unwrap(); // older: age 1 at step 2
        buf.push(1, p.clone()).unwrap(); // newer: age 0
        let out = buf.ensemble(2).unwrap();
        let (w0, w1) = (1.0, (-0.1f64).exp());
        let pe = p.steps[0].points[0].coords;
        let qe = q.steps[1].points[0].coords;
        let want = (pe * w0 + qe * w1) / (w0 + w1);
        assert!((out.points[0].coords - want).norm() < 1e-12);
        assert!((out.weights[0] - w0 / (w0 + w1)).abs() < 1e-15);
    }

    #[test]
    fn no_coverage_is_an_error() {
        let mut buf = ChunkBuffer::new(0.1);
        assert!(matches!(buf.ensemble(1), Err(ControlError::NoCoverage(1))));
        buf.push(0, chunk(3, 0.0, 0.0)).unwrap();
        assert!(matches!(buf.ensemble(4), Err(ControlError::NoCoverage(4))));
        assert!(buf.is_empty());
        assert!(buf.push(0, chunk(3, 0.0, 0.0)).is_ok());
        assert!(buf.push(0, chunk(3, 0.0, 0.0)).is_err());
    }

    #[test]
    fn infinite_decay_keeps_newest() {
        let mut buf = ChunkBuffer::new(f64::INFINITY);
        buf.push(0, chunk(5, 1.0, 0.0)).unwrap();
        buf.push(1, chunk(5, 7.0, 0.0)).unwrap();
        let out = buf.ensemble(3).unwrap();
        assert_eq!(out.points, chunk(5, 7.0, 0.0).steps[1].points);
    }

    proptest! {
        #[test]
        fn weights_are_convex(decay in 0.0f64..5.0, n in 1usize..15, len in 1usize..25) {
            let mut buf = ChunkBuffer::new(decay);
            for s in 0..n {
                buf.push(s, chunk(len, s as f64, 0.0)).unwrap();
                if let Ok(out) = buf.ensemble(s + 1) {
                    let total: f64 = out.weights.iter().sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    prop_assert!(out.weights.iter().all(|w| *w >= 0.0));
                    prop_assert!(out.weights.windows(2).all(|w| w[0] >= w[1]));
                }
            }
            prop_assert!(buf.emission_steps().windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn large_decay_approaches_newest(decay in 30.0f64..60.0) {
            let mut buf = ChunkBuffer::new(decay);
            buf.push(0, chunk(5, 1.0, 0.0)).unwrap();
            buf.push(1, chunk(5, 7.0, 0.0)).unwrap();
            let out = buf.ensemble(2).unwrap();
            let newest = chunk(5, 7.0, 0.0).steps[0].points[0];
            prop_assert!((out.points[0] - newest).norm() < 1e-9);
        }
    }
}

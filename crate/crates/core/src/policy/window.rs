use crate::dataio::history_indices;
use crate::geometry::Point3;

/// Keypoints observed at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointObservation {
    pub robot: Vec<Point3>,
    pub object: Vec<Point3>,
    pub gripper_closed: bool,
}

/// The last `H` observations of every keypoint (oldest first) and the current gripper state.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    /// `robot[frame][point]`.
    pub robot: Vec<Vec<Point3>>,
    /// `object[frame][point]`.
    pub object: Vec<Vec<Point3>>,
    pub gripper_closed: bool,
}

impl ObservationWindow {
    /// Window over the last `history` entries; shorter histories are
    /// front-padded by repeating their first entry.
    ///
    /// # Panics
    /// If `observations` is empty or `history` is zero.
    pub fn from_history(observations: &[KeypointObservation], history: usize) -> Self {
        assert!(!observations.is_empty() && history > 0, "window needs observations");
        let n = observations.len();
        let frames: Vec<&KeypointObservation> = history_indices(n - 1, history)
            .into_iter()
            .map(|i| &observations[i])
            .collect();
        Self {
            robot: frames.iter().map(|o| o.robot.clone()).collect(),
            object: frames.iter().map(|o| o.object.clone()).collect(),
            gripper_closed: observations[n - 1].gripper_closed,
        }
    }

    pub fn history(&self) -> usize {
        self.robot.len()
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        let map = |frames: &Vec<Vec<Point3>>| frames.iter().map(|fr| fr.iter().map(&f).collect()).collect();
        Self {
            robot: map(&self.robot),
            object: map(&self.object),
            gripper_closed: self.gripper_closed,
        }
    }
}

/// One predicted future step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStep {
    /// Robot keypoints (meters).
    pub points: Vec<Point3>,
    pub gripper_logit: f64,
}

impl ChunkStep {
    pub fn gripper_probability(&self) -> f64 {
        1.0 / (1.0 + (-self.gripper_logit).exp())
    }
}

/// Predictions for the next `L` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub steps: Vec<ChunkStep>,
}

impl ActionChunk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.steps.iter().all(|s| {
            s.gripper_logit.is_finite() && s.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(i: usize) -> KeypointObservation {
        KeypointObservation {
            robot: vec![Point3::new(i as f64, 0.0, 0.0)],
            object: vec![Point3::new(0.0, i as f64, 0.0)],
            gripper_closed: i % 2 == 1,
        }
    }

    #[test]
    fn short_history_is_front_padded() {
        let hist: Vec<_> = (0..3).map(obs).collect();
        let w = ObservationWindow::from_history(&hist, 5);
        let xs: Vec<f64> = w.robot.iter().map(|f| f[0].x).collect();
        assert_eq!(xs, vec![0.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(!w.gripper_closed);
    }

    #[test]
    fn long_history_keeps_the_latest() {
        let hist: Vec<_> = (0..12).map(obs).collect();
        let w = ObservationWindow::from_history(&hist, 4);
        let ys: Vec<f64> = w.object.iter().map(|f| f[0].y).collect();
        assert_eq!(ys, vec![8.0, 9.0, 10.0, 11.0]);
        assert!(w.gripper_closed);
    }
}

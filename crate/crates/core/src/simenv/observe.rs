use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dataio::PixelObs;
use crate::geometry::{CameraModel, Point2, Point3};

/// Measurement corruption applied by [`observe_points`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of additive pixel noise per axis (px).
    pub pixel_sigma: f64,
    /// Constant offset added to sensor depth (meters).
    pub depth_bias: f64,
    /// Standard deviation of Gaussian sensor-depth noise (meters).
    pub depth_jitter: f64,
    /// Probability that a keypoint is occluded in a given view and frame.
    pub occlusion_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.5,
            depth_bias: 0.0,
            depth_jitter: 0.0,
            occlusion_prob: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("pixel_sigma", self.pixel_sigma),
            ("depth_bias", self.depth_bias),
            ("depth_jitter", self.depth_jitter),
            ("occlusion_prob", self.occlusion_prob),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidSpec(format!("noise.{name} must be a finite non-negative number")));
            }
        }
        if self.occlusion_prob > 1.0 {
            return Err(SimError::InvalidSpec("noise.occlusion_prob must not exceed 1".into()));
        }
        Ok(())
    }
}

/// How 3D object points are recovered from the two views during rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftingMode {
    /// Two-view triangulation of the pixel tracks.
    Triangulated,
    /// Back-projection of the first view through the corrupted sensor depth.
    Sensor,
}

impl std::fmt::Display for LiftingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LiftingMode::Triangulated => "triangulated",
            LiftingMode::Sensor => "sensor",
        })
    }
}

impl std::str::FromStr for LiftingMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangulated" => Ok(LiftingMode::Triangulated),
            "sensor" => Ok(LiftingMode::Sensor),
            other => Err(SimError::InvalidSpec(format!("unknown lifting mode {other:?}"))),
        }
    }
}

/// Projects every point into every camera with Gaussian pixel noise and
/// random occlusion flags. With `with_depth`, each observation also carries
/// the true optical-axis depth plus bias and jitter. Output is `[view][point]`.
pub fn observe_points<R: Rng>(
    points: &[Point3],
    cameras: &[CameraModel],
    noise: &NoiseModel,
    with_depth: bool,
    rng: &mut R,
) -> Result<Vec<Vec<PixelObs>>, SimError> {
    let pixel = Normal::new(0.0, noise.pixel_sigma).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let jitter = Normal::new(0.0, noise.depth_jitter).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    cameras
        .iter()
        .map(|cam| {
            points
                .iter()
                .map(|p| {
                    let px = cam.project(p)?;
                    let u = px.x + pixel.sample(rng);
                    let v = px.y + pixel.sample(rng);
                    let occluded = noise.occlusion_prob > 0.0 && rng.random::<f64>() < noise.occlusion_prob;
                    let depth = with_depth.then(|| cam.depth(p) + noise.depth_bias + jitter.sample(rng));
                    Ok(PixelObs { u, v, occluded, depth })
                })
                .collect()
        })
        .collect()
}

/// Lifts one frame of `[view][point]` observations by back-projecting the
/// first view's pixels through their measured depth.
pub fn lift_with_sensor_depth(views: &[Vec<PixelObs>], cameras: &[CameraModel]) -> Result<Vec<Point3>, SimError> {
    let (Some(view), Some(cam)) = (views.first(), cameras.first()) else {
        return Err(SimError::MissingDepth);
    };
    view.iter()
        .map(|o| {
            let depth = o.depth.ok_or(SimError::MissingDepth)?;
            Ok(cam.back_project(&Point2::new(o.u, o.v), depth))
        })
        .collect()
}

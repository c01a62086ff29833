//! TOML configuration shared by every stage of the pipeline.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::control::ControlConfig;
use crate::geometry::{matrix_to_quaternion, quaternion_to_matrix, CameraModel, Point3, RigidTransform};
use crate::policy::{ModelConfig, TrainConfig};
use crate::retarget::RobotConfig;
use crate::simenv::{NoiseModel, TaskConfig};

/// Environment variable naming the default directory for demos, checkpoints and reports.
pub const DATA_ROOT_ENV: &str = "POINT_POLICY_DATA";

/// Camera parameters as stored in files: intrinsics row-major, world→camera
/// rotation as a `[w, x, y, z]` quaternion, translation in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: String,
    pub intrinsics: [f64; 9],
    pub orientation: [f64; 4],
    pub translation: [f64; 3],
}

impl CameraRecord {
    pub fn from_camera(id: &str, camera: &CameraModel) -> Self {
        let k = camera.intrinsics();
        let ext = camera.extrinsics();
        let q = matrix_to_quaternion(ext.rotation()).expect("camera rotation is valid");
        let t = ext.translation();
        Self {
            id: id.to_string(),
            intrinsics: [
                k[(0, 0)], k[(0, 1)], k[(0, 2)],
                k[(1, 0)], k[(1, 1)], k[(1, 2)],
                k[(2, 0)], k[(2, 1)], k[(2, 2)],
            ],
            orientation: [q.w, q.i, q.j, q.k],
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn to_camera(&self) -> Result<CameraModel, DataError> {
        let k = Matrix3::from_row_slice(&self.intrinsics);
        let [w, x, y, z] = self.orientation;
        let r = quaternion_to_matrix(&Quaternion::new(w, x, y, z))?;
        let ext = RigidTransform::new(r, Vector3::from(self.translation))?;
        Ok(CameraModel::new(k, ext)?)
    }
}

/// The two default views: 640×480, focal 500 px, one meter from the
/// workspace center at ±30° yaw and 35° elevation, facing the robot base.
pub fn default_cameras() -> Vec<CameraRecord> {
    let center = Point3::new(0.5, 0.0, 0.1);
    let elevation = 35f64.to_radians();
    [("left", 30f64), ("right", -30f64)]
        .iter()
        .map(|(id, yaw_deg)| {
            let yaw = yaw_deg.to_radians();
            let dir = Vector3::new(elevation.cos() * yaw.cos(), elevation.cos() * yaw.sin(), elevation.sin());
            let eye = center + dir;
            let k = CameraModel::simple_intrinsics(500.0, 320.0, 240.0);
            let cam = CameraModel::look_at(k, &eye, &center, &Vector3::z()).expect("default camera is valid");
            CameraRecord::from_camera(id, &cam)
        })
        .collect()
}

/// Demo handling: subsampling and the train/validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub subsample_stride: usize,
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            subsample_stride: 3,
            val_fraction: 0.1,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Empty means [`default_cameras`].
    pub cameras: Vec<CameraRecord>,
    pub task: TaskConfig,
    pub noise: NoiseModel,
    pub robot: RobotConfig,
    pub control: ControlConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            cameras: Vec::new(),
            task: TaskConfig::default(),
            noise: NoiseModel::default(),
            robot: RobotConfig::default(),
            control: ControlConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: Config = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn camera_records(&self) -> Vec<CameraRecord> {
        if self.cameras.is_empty() {
            default_cameras()
        } else {
            self.cameras.clone()
        }
    }

    pub fn camera_models(&self) -> Result<Vec<CameraModel>, DataError> {
        self.camera_records().iter().map(CameraRecord::to_camera).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Config(msg));
        let cams = self.camera_models()?;
        if cams.len() < 2 {
            return bad(format!("need at least two cameras, got {}", cams.len()));
        }
        if self.data.subsample_stride == 0 {
            return bad("data.subsample_stride must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return bad("data.val_fraction must lie in [0, 1)".into());
        }
        self.task.to_spec().map_err(|e| DataError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| DataError::Config(e.to_string()))?;
        self.robot.validate().map_err(DataError::Config)?;
        self.control.validate().map_err(DataError::Config)?;
        self.model.validate().map_err(|e| DataError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| DataError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Directory named by [`DATA_ROOT_ENV`], if set.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_record_roundtrip() {
        for rec in default_cameras() {
            let cam = rec.to_camera().unwrap();
            let again = CameraRecord::from_camera(&rec.id, &cam);
            for (a, b) in rec.orientation.iter().zip(again.orientation.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_views_see_the_workspace() {
        let cams: Vec<CameraModel> = default_cameras().iter().map(|c| c.to_camera().unwrap()).collect();
        for x in [0.25, 0.75] {
            for y in [-0.3, 0.3] {
                for z in [0.0, 0.45] {
                    for cam in &cams {
                        let px = cam.project(&Point3::new(x, y, z)).unwrap();
                        assert!(px.x > 0.0 && px.x < 640.0 && px.y > 0.0 && px.y < 480.0, "{x} {y} {z} -> {px}");
                    }
                }
            }
        }
    }

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        let again = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml_str("bogus = 1").is_err());
        assert!(Config::from_toml_str("[train]\nlr = -1.0").is_err());
    }
}

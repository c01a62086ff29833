//! Line-delimited JSON demonstration files.
//!
//! Line 1 is a [`DemoHeader`]; every following non-empty line is one
//! [`Frame`]. The grammar is documented in `docs/FORMATS.md`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CameraRecord;
use super::schema::{KeypointSpec, Role, TaskSchema};
use super::DataError;
use crate::geometry::CameraModel;

pub const FORMAT_NAME: &str = "point-policy-demo";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoHeader {
    pub format: String,
    pub version: u32,
    pub task: String,
    /// Nominal frame rate in Hz.
    pub rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub keypoints: Vec<KeypointSpec>,
    /// One entry per view column of every frame.
    #[serde(default)]
    pub cameras: Vec<CameraRecord>,
}

impl DemoHeader {
    pub fn new(task: &str, rate_hz: f64, keypoints: Vec<KeypointSpec>, cameras: Vec<CameraRecord>) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            task: task.to_string(),
            rate_hz,
            seed: None,
            keypoints,
            cameras,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One keypoint seen in one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelObs {
    pub u: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub occluded: bool,
    /// Measured depth along the optical axis (meters), when a depth sensor is simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

impl PixelObs {
    pub fn visible(u: f64, v: f64) -> Self {
        Self {
            u,
            v,
            occluded: false,
            depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    /// Seconds since the start of the demonstration.
    pub t: f64,
    /// `views[camera][keypoint]`.
    #[serde(default)]
    pub views: Vec<Vec<PixelObs>>,
    /// 3D position per keypoint (meters, robot base frame).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 3]>>,
    /// `true` when the gripper is closed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub header: DemoHeader,
    pub frames: Vec<Frame>,
}

impl Demonstration {
    pub fn keypoint_index(&self, name: &str) -> Option<usize> {
        self.header.keypoints.iter().position(|k| k.name == name)
    }

    /// Indices of keypoints with the given role, in header order.
    pub fn indices_of(&self, role: Role) -> Vec<usize> {
        self.header
            .keypoints
            .iter()
            .enumerate()
            .filter(|(_, k)| k.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn schema(&self) -> TaskSchema {
        TaskSchema::from_keypoints(&self.header.task, &self.header.keypoints)
    }

    pub fn cameras(&self) -> Result<Vec<CameraModel>, DataError> {
        self.header.cameras.iter().map(CameraRecord::to_camera).collect()
    }

    /// Checks every structural invariant of the format.
    pub fn validate(&self) -> Result<(), DataError> {
        let h = &self.header;
        if h.format != FORMAT_NAME {
            return Err(DataError::CorruptFile(format!("unknown format tag {:?}", h.format)));
        }
        if h.version != FORMAT_VERSION {
            return Err(DataError::FormatVersionMismatch {
                found: h.version,
                expected: FORMAT_VERSION,
            });
        }
        let violation = |msg: String| Err(DataError::SchemaViolation(msg));
        if !(h.rate_hz.is_finite() && h.rate_hz > 0.0) {
            return violation(format!("rate_hz must be positive, got {}", h.rate_hz));
        }
        if h.keypoints.is_empty() {
            return violation("no keypoints declared".into());
        }
        let mut names = HashSet::new();
        for k in &h.keypoints {
            if k.name.is_empty() || !names.insert(k.name.as_str()) {
                return violation(format!("keypoint name {:?} is empty or repeated", k.name));
            }
        }
        for cam in &h.cameras {
            cam.to_camera()?;
        }

        let n_kp = h.keypoints.len();
        let n_views = h.cameras.len();
        let has_points = self.frames.first().map(|f| f.points.is_some());
        let has_gripper = self.frames.first().map(|f| f.gripper.is_some());
        let mut last_t = f64::NEG_INFINITY;
        for (i, f) in self.frames.iter().enumerate() {
            if !f.t.is_finite() || f.t <= last_t {
                return violation(format!("frame {i}: timestamp {} does not increase", f.t));
            }
            last_t = f.t;
            if f.views.len() != n_views {
                return violation(format!(
                    "frame {i}: {} view columns for {n_views} cameras",
                    f.views.len()
                ));
            }
            for (c, view) in f.views.iter().enumerate() {
                if view.len() != n_kp {
                    return violation(format!(
                        "frame {i}, view {c}: {} observations for {n_kp} keypoints",
                        view.len()
                    ));
                }
                for obs in view {
                    let depth_ok = obs.depth.is_none_or(|d| d.is_finite());
                    if !(obs.u.is_finite() && obs.v.is_finite() && depth_ok) {
                        return violation(format!("frame {i}, view {c}: non-finite observation"));
                    }
                }
            }
            if Some(f.points.is_some()) != has_points || Some(f.gripper.is_some()) != has_gripper {
                return violation(format!("frame {i}: optional columns change between frames"));
            }
            if let Some(points) = &f.points {
                if points.len() != n_kp {
                    return violation(format!(
                        "frame {i}: {} 3D points for {n_kp} keypoints",
                        points.len()
                    ));
                }
                if !points.iter().flatten().all(|v| v.is_finite()) {
                    return violation(format!("frame {i}: non-finite 3D point"));
                }
            }
        }
        Ok(())
    }
}

pub fn write_demo_to<W: Write>(demo: &Demonstration, mut out: W) -> Result<(), DataError> {
    demo.validate()?;
    let ser = |e: serde_json::Error| DataError::CorruptFile(e.to_string());
    let io = |e: std::io::Error| DataError::Io {
        path: "<writer>".into(),
        source: e,
    };
    serde_json::to_writer(&mut out, &demo.header).map_err(ser)?;
    out.write_all(b"\n").map_err(io)?;
    for f in &demo.frames {
        serde_json::to_writer(&mut out, f).map_err(ser)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_demo(path: &Path, demo: &Demonstration) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_demo_to(demo, BufWriter::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::io(path, source),
        other => other,
    })
}

pub fn read_demo_from<R: Read>(input: R) -> Result<Demonstration, DataError> {
    let mut lines = BufReader::new(input).lines();
    let io = |e: std::io::Error| DataError::CorruptFile(format!("unreadable input: {e}"));
    let first = match lines.next() {
        Some(line) => line.map_err(io)?,
        None => return Err(DataError::CorruptFile("empty file".into())),
    };
    let raw: serde_json::Value = serde_json::from_str(&first)
        .map_err(|e| DataError::CorruptFile(format!("header is not JSON: {e}")))?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
        return Err(DataError::CorruptFile("missing format tag".into()));
    }
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DataError::CorruptFile("missing version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(DataError::FormatVersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let header: DemoHeader = serde_json::from_value(raw)
        .map_err(|e| DataError::CorruptFile(format!("bad header: {e}")))?;
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Frame = serde_json::from_str(&line)
            .map_err(|e| DataError::CorruptFile(format!("frame {i}: {e}")))?;
        frames.push(frame);
    }
    let demo = Demonstration { header, frames };
    demo.validate()?;
    Ok(demo)
}

pub fn read_demo(path: &Path) -> Result<Demonstration, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_demo_from(file)
}

/// Keeps frames `0, stride, 2·stride, …` and always the final frame.
///
/// # Panics
/// If `stride` is zero.
pub fn subsample(demo: &Demonstration, stride: usize) -> Demonstration {
    assert!(stride >= 1, "subsample stride must be at least 1");
    let n = demo.frames.len();
    let mut frames: Vec<Frame> = demo.frames.iter().step_by(stride).cloned().collect();
    if n > 0 && (n - 1) % stride != 0 {
        frames.push(demo.frames[n - 1].clone());
    }
    let mut header = demo.header.clone();
    header.rate_hz = demo.header.rate_hz / stride as f64;
    Demonstration { header, frames }
}

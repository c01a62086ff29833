//! Demonstration files, dataset assembly, normalization statistics and configuration.

mod config;
mod dataset;
mod demo;
mod schema;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use config::{data_root, default_cameras, CameraRecord, Config, DataConfig, DATA_ROOT_ENV};
pub use dataset::{
    build_dataset, history_indices, split_demos, target_indices, Dataset, NormStats, SampleRef,
    TrackDemo, STD_FLOOR,
};
pub use demo::{
    read_demo, read_demo_from, subsample, write_demo, write_demo_to, DemoHeader, Demonstration,
    Frame, PixelObs, FORMAT_NAME, FORMAT_VERSION,
};
pub use schema::{KeypointSpec, Role, TaskSchema};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("demonstrations disagree on keypoint schema: {0}")]
    SchemaMismatchAcrossDemos(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

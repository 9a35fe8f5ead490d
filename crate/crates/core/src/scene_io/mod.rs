//! On-disk formats: scene manifests, image assets, the binary point-cloud
//! container, and the packaged scene-artifact directory.
//!
//! Loaders validate eagerly; any malformed input yields a structured error,
//! never a partially loaded value. Writers are deterministic so identical
//! inputs produce byte-identical files.

mod cloud;
mod images;
mod manifest;
mod scene;

pub use cloud::{export_ply, load_cloud, save_cloud, CLOUD_MAGIC, CLOUD_VERSION, RECORD_BYTES};
pub use images::{
    load_color, load_depth, load_mask, save_color, save_depth, save_mask, ColorImage, DepthMap,
    OccupancyMask, MAX_DEPTH_M,
};
pub use manifest::{CameraRecord, FrameRecord, SceneManifest};
pub use scene::{SceneArtifact, ALIGNMENT_FILE, CLOUD_FILE, SCENE_FILE};

use crate::reconstruction::FrameTag;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: format error: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        path: PathBuf,
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: bad magic, not a cloud container")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported container version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{path}: truncated file")]
    TruncatedFile { path: PathBuf },
    #[error("expected a cloud in the {expected:?} frame, got {found:?}")]
    WrongFrameTag { expected: FrameTag, found: FrameTag },
}

impl SceneIoError {
    fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &std::path::Path, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::Validation(message.into())
    }
}

fn image_error(path: &std::path::Path, err: image::ImageError) -> SceneIoError {
    match err {
        image::ImageError::IoError(io) => {
            if io.kind() == std::io::ErrorKind::NotFound {
                SceneIoError::MissingFile(path.to_path_buf())
            } else {
                SceneIoError::io(path, io)
            }
        }
        other => SceneIoError::parse(path, other.to_string()),
    }
}

//! File formats and datasets: 16-bit depth / 8-bit mask and color PNGs, PLY
//! meshes with a symmetry sidecar, BOP-style scene JSON, TOML run
//! configuration, and the procedural scene generator.

mod bop;
mod config;
mod image;
mod ply;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::metrics::MetricError;

pub use bop::{
    load_dataset, mask_path, write_dataset_json, CameraEntry, Dataset, GtEntry, PairEntry, SceneRecord,
    DEFAULT_DEPTH_SCALE,
};
pub use config::{DataConfig, LossSection, MatcherSection, RunConfig};
pub use image::{
    load_depth_png, load_gray_png, load_mask_png, load_rgb_png, save_depth_png, save_mask_png, save_rgb_png,
    DepthLoad, RgbImage,
};
pub use ply::{load_mesh_ply, load_symmetries, parse_ply, symmetry_path, write_ply_ascii};
pub use synth::{synth_dataset, SynthConfig, SynthSummary};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: byte {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },
    #[error("{path}: unsupported format: {msg}")]
    Unsupported { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline; map keys keep their insertion order.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push(b'\n');
    std::fs::write(path, text).map_err(io_err(path))
}

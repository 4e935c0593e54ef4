//! Depth-aware coarse-to-fine matching: fusion of appearance and depth
//! descriptors, temperature-scaled similarity, dual softmax, mutual nearest
//! neighbours on the coarse grid and heatmap-expectation refinement on the
//! fine grid.
//!
//! Features come from a [`FeatureProvider`]; the builtin provider is a
//! classical descriptor, the import provider reads externally computed
//! tensors from the binary container of [`FeatureMap::write_container`].

mod builtin;
mod features;
mod kernel;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{DepthMap, ScalarImage};

pub use builtin::{builtin_features, BuiltinFeatures, BUILTIN_CHANNELS};
pub use features::{FeatureMap, FeaturePyramid, Resolution};
pub use kernel::{
    coarse_cell_center, coarse_match, dual_softmax, fine_refine, fuse_features, heatmap_expectation,
    match_pyramids, mutual_nn_filter, similarity_matrix, Decoder, DualSoftmax, FineReport, IdentityDecoder, Match,
    MatchConfig, MatchOutput, MatchSet, MnnReport,
};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("feature container: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<MatchError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Supplies the coarse and fine descriptors of one image. `key` names the
/// image for providers that look features up rather than compute them.
pub trait FeatureProvider: Sync {
    fn name(&self) -> &'static str;
    fn extract(&self, key: &str, image: &ScalarImage, depth: Option<&DepthMap>) -> Result<FeaturePyramid, MatchError>;
}

/// [`builtin_features`], fused with the depth descriptors when depth is
/// supplied and `use_depth` is set.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinProvider {
    pub use_depth: bool,
}

impl Default for BuiltinProvider {
    fn default() -> Self {
        Self { use_depth: true }
    }
}

impl FeatureProvider for BuiltinProvider {
    fn name(&self) -> &'static str {
        "builtin"
    }

    fn extract(&self, _key: &str, image: &ScalarImage, depth: Option<&DepthMap>) -> Result<FeaturePyramid, MatchError> {
        let f = builtin_features(image, depth.filter(|_| self.use_depth))?;
        match f.depth {
            Some(d) => FeaturePyramid::new(
                fuse_features(&f.rgb.coarse, &d.coarse)?,
                fuse_features(&f.rgb.fine, &d.fine)?,
            ),
            None => Ok(f.rgb),
        }
    }
}

/// Reads `{key}_coarse.bin` and `{key}_fine.bin` from a directory; when
/// `{key}_depth_coarse.bin` and `{key}_depth_fine.bin` also exist they are
/// fused in.
#[derive(Debug, Clone)]
pub struct ImportProvider {
    pub dir: PathBuf,
}

impl ImportProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn read(&self, name: &str, resolution: Resolution) -> Result<FeatureMap, MatchError> {
        let path = self.dir.join(name);
        read_container_file(&path, resolution)
    }
}

pub fn read_container_file(path: &Path, resolution: Resolution) -> Result<FeatureMap, MatchError> {
    let wrap = |e: MatchError| MatchError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let file = File::open(path).map_err(|e| wrap(e.into()))?;
    FeatureMap::read_container(BufReader::new(file), resolution).map_err(wrap)
}

impl FeatureProvider for ImportProvider {
    fn name(&self) -> &'static str {
        "import"
    }

    fn extract(&self, key: &str, _image: &ScalarImage, _depth: Option<&DepthMap>) -> Result<FeaturePyramid, MatchError> {
        let coarse = self.read(&format!("{key}_coarse.bin"), Resolution::Coarse)?;
        let fine = self.read(&format!("{key}_fine.bin"), Resolution::Fine)?;
        let dc = self.dir.join(format!("{key}_depth_coarse.bin"));
        let df = self.dir.join(format!("{key}_depth_fine.bin"));
        if dc.exists() && df.exists() {
            let dc = read_container_file(&dc, Resolution::Coarse)?;
            let df = read_container_file(&df, Resolution::Fine)?;
            return FeaturePyramid::new(fuse_features(&coarse, &dc)?, fuse_features(&fine, &df)?);
        }
        FeaturePyramid::new(coarse, fine)
    }
}

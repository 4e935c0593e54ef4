use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_err, io_err, IoError, SynthConfig, DEFAULT_DEPTH_SCALE};
use crate::geometry::DepthRange;
use crate::losses::LossWeights;
use crate::matching::MatchConfig;
use crate::metrics::RecallConfig;
use crate::pose::RansacConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub d_min: f64,
    pub d_max: f64,
    /// Stored depth units per meter for standalone PNGs.
    pub depth_scale: f64,
    /// Multiplier taking PLY coordinates to meters.
    pub model_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let r = DepthRange::default();
        Self {
            d_min: r.min,
            d_max: r.max,
            depth_scale: DEFAULT_DEPTH_SCALE,
            model_scale: 1.0,
        }
    }
}

impl DataConfig {
    pub fn range(&self) -> DepthRange {
        DepthRange {
            min: self.d_min,
            max: self.d_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherSection {
    pub theta_c: f64,
    pub tau: f64,
    pub fine_tau: f64,
    pub window: usize,
    /// Fuse depth descriptors into the image descriptors.
    pub use_depth: bool,
    /// Blank image and depth outside the object mask before extraction.
    pub mask_inputs: bool,
    /// Lift fine (sub-pixel) matches; `false` lifts coarse cell centers.
    pub refine: bool,
}

impl Default for MatcherSection {
    fn default() -> Self {
        let m = MatchConfig::default();
        Self {
            theta_c: m.theta_c,
            tau: m.tau,
            fine_tau: m.fine_tau,
            window: m.window,
            use_depth: true,
            mask_inputs: true,
            refine: true,
        }
    }
}

impl MatcherSection {
    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            tau: self.tau,
            fine_tau: self.fine_tau,
            theta_c: self.theta_c,
            window: self.window,
        }
    }
}

/// Loss weights under the names of the published hyper-parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub scale_weight: f64,
    pub eta: f64,
    pub edge_weight: f64,
    pub sigma: f64,
    pub norm_weight: f64,
    pub reg_weight: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            scale_weight: w.w_scale,
            eta: w.eta,
            edge_weight: w.w_edge,
            sigma: w.sigma,
            norm_weight: w.w_norm,
            reg_weight: w.w_reg,
            alpha: w.alpha,
            lambda: w.lambda,
        }
    }
}

impl LossSection {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            eta: self.eta,
            sigma: self.sigma,
            lambda: self.lambda,
            w_scale: self.scale_weight,
            w_edge: self.edge_weight,
            w_norm: self.norm_weight,
            w_reg: self.reg_weight,
        }
    }
}

/// Whole-run configuration; every section and key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub matcher: MatcherSection,
    pub loss: LossSection,
    pub solver: RansacConfig,
    pub recall: RecallConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg = Self::from_toml_str(&text).map_err(|e| format_err(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let d = &self.data;
        if !(d.d_min > 0.0 && d.d_min < d.d_max && d.d_max.is_finite()) {
            return Err(IoError::Invalid(format!("depth range [{}, {}] is invalid", d.d_min, d.d_max)));
        }
        if !(d.depth_scale > 0.0 && d.model_scale > 0.0) {
            return Err(IoError::Invalid("depth_scale and model_scale must be positive".into()));
        }
        self.matcher
            .match_config()
            .validate()
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        self.loss.weights().validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        self.recall.validate()?;
        self.synth.validate()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

//! Composite depth loss `L_depth = L_local + L_global`.
//!
//! * global: scale/shift-invariant MSE after a closed-form affine fit, a
//!   multi-scale gradient-matching regularizer and BerHu;
//! * local: robust scale alignment, image-edge weighted gradient matching and
//!   normal consistency.
//!
//! Every term has an analytic gradient with respect to the predicted depth so
//! that it can be checked against [`finite_difference_gradient`].
//!
//! All terms are evaluated over the *loss domain*: pixels that are inside the
//! optional mask and valid (`> 0`) in both prediction and ground truth. `M`
//! is the number of such pixels.

mod fit;
mod prior;
mod terms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{check_shape, CameraIntrinsics, DepthMap, GeometryError, Grid, Mask, ScalarImage};

pub use fit::{fit_scale_shift, ssi_loss, ScaleShift};
pub use prior::rescale_with_prior;
pub use terms::{
    berhu, berhu_threshold, edge_emphasize_loss, gradient_matching_loss, normal_consistency_loss,
    normal_weight, scale_alignment_loss, GRADIENT_MATCHING_LEVELS,
};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no valid pixels in the loss domain")]
    NoValidPixels,
    #[error("degenerate scale/shift fit: {0}")]
    DegenerateFit(String),
    #[error("degenerate depth prior: {0}")]
    DegeneratePrior(String),
    #[error("image {width}x{height} is too small for {levels} pyramid levels")]
    TooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Loss hyper-parameters. Defaults follow the published fine-tuning setup;
/// `lambda` is not published and defaults to 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub w_scale: f64,
    pub w_edge: f64,
    pub w_norm: f64,
    pub w_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            eta: 0.2,
            sigma: 1.0,
            lambda: 1.0,
            w_scale: 1.0,
            w_edge: 0.7,
            w_norm: 0.6,
            w_reg: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let all = [
            self.alpha,
            self.eta,
            self.sigma,
            self.lambda,
            self.w_scale,
            self.w_edge,
            self.w_norm,
            self.w_reg,
        ];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(LossError::InvalidInput(format!("loss weights must be >= 0: {self:?}")))
        }
    }
}

/// Per-term values and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ssi: f64,
    pub reg: f64,
    pub berhu: f64,
    pub scale: f64,
    pub edge: f64,
    pub norm: f64,
    pub total: f64,
    pub valid_pixels: usize,
}

impl LossReport {
    fn assemble(terms: [f64; 6], weights: &LossWeights, valid_pixels: usize) -> Self {
        let [ssi, reg, berhu, scale, edge, norm] = terms;
        let total = weights.w_scale * scale
            + weights.w_edge * edge
            + weights.w_norm * norm
            + ssi
            + weights.w_reg * reg
            + weights.alpha * berhu;
        Self {
            ssi,
            reg,
            berhu,
            scale,
            edge,
            norm,
            total,
            valid_pixels,
        }
    }
}

/// Pixels inside `mask` that are valid in both maps.
pub fn loss_domain(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<Mask, LossError> {
    check_shape("prediction vs ground truth", gt.as_grid(), pred.as_grid())?;
    if let Some(m) = mask {
        check_shape("mask vs ground truth", gt.as_grid(), m)?;
    }
    Ok(Grid::from_fn(gt.width(), gt.height(), |u, v| {
        pred.is_valid(u, v) && gt.is_valid(u, v) && mask.is_none_or(|m| *m.get(u, v))
    }))
}

pub(crate) fn nonempty_domain(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<(Mask, usize), LossError> {
    let domain = loss_domain(pred, gt, mask)?;
    let m = domain.count();
    if m == 0 {
        return Err(LossError::NoValidPixels);
    }
    Ok((domain, m))
}

/// Full composite loss with the standard four-level gradient-matching pyramid.
pub fn total_depth_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    rgb_gray: &ScalarImage,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
    weights: &LossWeights,
) -> Result<LossReport, LossError> {
    weights.validate()?;
    let ctx = LossContext {
        gt,
        rgb_gray,
        k,
        mask,
        weights: *weights,
        levels: GRADIENT_MATCHING_LEVELS,
    };
    let (_, m) = nonempty_domain(pred, gt, mask)?;
    let mut terms = [0.0; 6];
    for (slot, term) in terms.iter_mut().zip(LossTerm::ALL) {
        *slot = ctx.value(term, pred)?;
    }
    Ok(LossReport::assemble(terms, weights, m))
}

/// One of the six loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTerm {
    Ssi,
    Reg,
    Berhu,
    Scale,
    Edge,
    Norm,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::Ssi,
        LossTerm::Reg,
        LossTerm::Berhu,
        LossTerm::Scale,
        LossTerm::Edge,
        LossTerm::Norm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Ssi => "ssi",
            LossTerm::Reg => "reg",
            LossTerm::Berhu => "berhu",
            LossTerm::Scale => "scale",
            LossTerm::Edge => "edge",
            LossTerm::Norm => "norm",
        }
    }
}

/// Everything a loss term needs besides the prediction.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub gt: &'a DepthMap,
    pub rgb_gray: &'a ScalarImage,
    pub k: &'a CameraIntrinsics,
    pub mask: Option<&'a Mask>,
    pub weights: LossWeights,
    pub levels: usize,
}

impl LossContext<'_> {
    pub fn value(&self, term: LossTerm, pred: &DepthMap) -> Result<f64, LossError> {
        let w = &self.weights;
        match term {
            LossTerm::Ssi => ssi_loss(pred, self.gt, self.mask),
            LossTerm::Reg => gradient_matching_loss(pred, self.gt, self.mask, self.levels),
            LossTerm::Berhu => berhu(pred, self.gt, self.mask),
            LossTerm::Scale => scale_alignment_loss(pred, self.gt, self.mask, w.eta),
            LossTerm::Edge => edge_emphasize_loss(pred, self.gt, self.rgb_gray, self.mask, w.sigma),
            LossTerm::Norm => normal_consistency_loss(pred, self.gt, self.k, self.mask, w.lambda),
        }
    }

    /// Analytic gradient with respect to every predicted pixel; zero outside
    /// the loss domain.
    pub fn gradient(&self, term: LossTerm, pred: &DepthMap) -> Result<Grid<f64>, LossError> {
        let w = &self.weights;
        match term {
            LossTerm::Ssi => fit::ssi_gradient(pred, self.gt, self.mask),
            LossTerm::Reg => terms::gradient_matching_gradient(pred, self.gt, self.mask, self.levels),
            LossTerm::Berhu => terms::berhu_gradient(pred, self.gt, self.mask),
            LossTerm::Scale => terms::scale_alignment_gradient(pred, self.gt, self.mask, w.eta),
            LossTerm::Edge => terms::edge_emphasize_gradient(pred, self.gt, self.rgb_gray, self.mask, w.sigma),
            LossTerm::Norm => terms::normal_consistency_gradient(pred, self.gt, self.k, self.mask, w.lambda),
        }
    }
}

/// Central-difference gradient of `term` with respect to every pixel of the
/// loss domain (zero elsewhere).
pub fn finite_difference_gradient(
    ctx: &LossContext<'_>,
    term: LossTerm,
    pred: &DepthMap,
    step: f64,
) -> Result<Grid<f64>, LossError> {
    if !(step > 0.0) {
        return Err(LossError::InvalidInput(format!("step must be > 0, got {step}")));
    }
    let (domain, _) = nonempty_domain(pred, ctx.gt, ctx.mask)?;
    let mut out = Grid::new(pred.width(), pred.height(), 0.0);
    let mut probe = pred.clone();
    for v in 0..pred.height() {
        for u in 0..pred.width() {
            if !*domain.get(u, v) {
                continue;
            }
            let z = pred.get(u, v);
            probe.set(u, v, z + step);
            let plus = ctx.value(term, &probe)?;
            probe.set(u, v, z - step);
            let minus = ctx.value(term, &probe)?;
            probe.set(u, v, z);
            out.set(u, v, (plus - minus) / (2.0 * step));
        }
    }
    Ok(out)
}

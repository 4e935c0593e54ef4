use nalgebra::Vector3;

use super::{nonempty_domain, LossError};
use crate::geometry::{
    check_shape, normal_cross, normals_from_depth, scalar_gradient, CameraIntrinsics, DepthMap,
    Grid, Mask, ScalarImage, DEGENERATE_NORMAL,
};
use crate::numeric::CompensatedSum;

/// Pyramid depth of the gradient-matching regularizer.
pub const GRADIENT_MATCHING_LEVELS: usize = 4;

/// BerHu switches from L1 to L2 at this fraction of the largest error.
const BERHU_FRACTION: f64 = 0.1;

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// gradient matching (L_reg)

struct Level {
    err: Grid<f64>,
    valid: Mask,
}

/// 2x2 area average; an output pixel is valid only if all four inputs are.
fn downsample(level: &Level) -> Level {
    let (w, h) = (level.err.width() / 2, level.err.height() / 2);
    let mut err = Grid::new(w, h, 0.0);
    let mut valid = Grid::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let px = [(2 * u, 2 * v), (2 * u + 1, 2 * v), (2 * u, 2 * v + 1), (2 * u + 1, 2 * v + 1)];
            if px.iter().all(|&(a, b)| *level.valid.get(a, b)) {
                let s: f64 = px.iter().map(|&(a, b)| *level.err.get(a, b)).sum();
                err.set(u, v, 0.25 * s);
                valid.set(u, v, true);
            }
        }
    }
    Level { err, valid }
}

fn error_pyramid(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    levels: usize,
) -> Result<(Vec<Level>, usize), LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let (w, h) = (pred.width(), pred.height());
    if levels == 0 || (w >> (levels - 1)) == 0 || (h >> (levels - 1)) == 0 {
        return Err(LossError::TooSmall {
            width: w,
            height: h,
            levels,
        });
    }
    let err = Grid::from_fn(w, h, |u, v| {
        if *domain.get(u, v) {
            pred.get(u, v) - gt.get(u, v)
        } else {
            0.0
        }
    });
    let mut pyramid = vec![Level { err, valid: domain }];
    for _ in 1..levels {
        let next = downsample(pyramid.last().unwrap());
        pyramid.push(next);
    }
    Ok((pyramid, m))
}

/// Multi-scale gradient matching of the error field `pred - gt`:
/// `(1/M) Σ_k Σ_i |∇x e_i^k| + |∇y e_i^k|` over `levels` 2x-downsampled scales.
pub fn gradient_matching_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    levels: usize,
) -> Result<f64, LossError> {
    let (pyramid, m) = error_pyramid(pred, gt, mask, levels)?;
    let mut sum = CompensatedSum::new();
    for level in &pyramid {
        let g = scalar_gradient(&level.err, &level.valid);
        for (du, dv) in g.du.data().iter().zip(g.dv.data()) {
            sum.add(du.abs() + dv.abs());
        }
    }
    Ok(sum.value() / m as f64)
}

pub(crate) fn gradient_matching_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    levels: usize,
) -> Result<Grid<f64>, LossError> {
    let (pyramid, m) = error_pyramid(pred, gt, mask, levels)?;
    // dL/de at the coarsest level, pushed down through the 2x2 means
    let mut carry: Option<Grid<f64>> = None;
    for level in pyramid.iter().rev() {
        let (w, h) = level.err.shape();
        let mut grad = Grid::new(w, h, 0.0);
        if let Some(up) = carry.take() {
            for v in 0..up.height() {
                for u in 0..up.width() {
                    let g = 0.25 * up.get(u, v);
                    for (a, b) in [(2 * u, 2 * v), (2 * u + 1, 2 * v), (2 * u, 2 * v + 1), (2 * u + 1, 2 * v + 1)] {
                        let i = grad.index(a, b);
                        grad.data_mut()[i] += g;
                    }
                }
            }
        }
        let g = scalar_gradient(&level.err, &level.valid);
        for v in 0..h {
            for u in 0..w {
                let su = sign(*g.du.get(u, v));
                if su != 0.0 {
                    let i = grad.index(u, v);
                    let j = grad.index(u + 1, v);
                    grad.data_mut()[i] -= su;
                    grad.data_mut()[j] += su;
                }
                let sv = sign(*g.dv.get(u, v));
                if sv != 0.0 {
                    let i = grad.index(u, v);
                    let j = grad.index(u, v + 1);
                    grad.data_mut()[i] -= sv;
                    grad.data_mut()[j] += sv;
                }
            }
        }
        carry = Some(grad);
    }
    let base = &pyramid[0];
    let grad = carry.unwrap();
    let inv_m = 1.0 / m as f64;
    Ok(Grid::from_fn(grad.width(), grad.height(), |u, v| {
        if *base.valid.get(u, v) {
            grad.get(u, v) * inv_m
        } else {
            0.0
        }
    }))
}

// ---------------------------------------------------------------------------
// BerHu

fn domain_errors(pred: &DepthMap, gt: &DepthMap, domain: &Mask) -> Vec<(usize, f64)> {
    (0..domain.len())
        .filter(|&i| domain.data()[i])
        .map(|i| (i, pred.values()[i] - gt.values()[i]))
        .collect()
}

/// `c = 0.1 · max |pred - gt|` over the loss domain.
pub fn berhu_threshold(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<f64, LossError> {
    let (domain, _) = nonempty_domain(pred, gt, mask)?;
    let max = domain_errors(pred, gt, &domain)
        .iter()
        .fold(0.0f64, |acc, &(_, e)| acc.max(e.abs()));
    Ok(BERHU_FRACTION * max)
}

#[inline]
fn berhu_pixel(e: f64, c: f64) -> f64 {
    let a = e.abs();
    if a <= c {
        a
    } else {
        (e * e + c * c) / (2.0 * c)
    }
}

/// Mean reverse-Huber error; defined as 0 when every error is 0.
pub fn berhu(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<f64, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let errors = domain_errors(pred, gt, &domain);
    let c = BERHU_FRACTION * errors.iter().fold(0.0f64, |acc, &(_, e)| acc.max(e.abs()));
    if c == 0.0 {
        return Ok(0.0);
    }
    let sum: CompensatedSum = errors.iter().map(|&(_, e)| berhu_pixel(e, c)).collect();
    Ok(sum.value() / m as f64)
}

// The threshold depends on the arg-max pixel, which therefore also collects
// Σ_quadratic ∂f/∂c · ∂c/∂e.
pub(crate) fn berhu_gradient(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<Grid<f64>, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let errors = domain_errors(pred, gt, &domain);
    let mut out = Grid::new(pred.width(), pred.height(), 0.0);
    let (argmax, max) = errors
        .iter()
        .fold((usize::MAX, 0.0f64), |(bi, bm), &(i, e)| if e.abs() > bm { (i, e.abs()) } else { (bi, bm) });
    let c = BERHU_FRACTION * max;
    if c == 0.0 {
        return Ok(out);
    }
    let inv_m = 1.0 / m as f64;
    let mut dc = 0.0;
    for &(i, e) in &errors {
        let a = e.abs();
        let g = if a <= c {
            sign(e)
        } else {
            dc += (c * c - e * e) / (2.0 * c * c);
            e / c
        };
        out.data_mut()[i] = g * inv_m;
    }
    let e_max = pred.values()[argmax] - gt.values()[argmax];
    out.data_mut()[argmax] += dc * BERHU_FRACTION * sign(e_max) * inv_m;
    Ok(out)
}

// ---------------------------------------------------------------------------
// scale alignment

/// `(1/M) Σ e² / (1 + η|e|)` with `e = pred - gt`.
pub fn scale_alignment_loss(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>, eta: f64) -> Result<f64, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let sum: CompensatedSum = domain_errors(pred, gt, &domain)
        .iter()
        .map(|&(_, e)| e * e / (1.0 + eta * e.abs()))
        .collect();
    Ok(sum.value() / m as f64)
}

pub(crate) fn scale_alignment_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    eta: f64,
) -> Result<Grid<f64>, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let mut out = Grid::new(pred.width(), pred.height(), 0.0);
    let inv_m = 1.0 / m as f64;
    for (i, e) in domain_errors(pred, gt, &domain) {
        let d = 1.0 + eta * e.abs();
        out.data_mut()[i] = (2.0 * e + eta * e * e.abs()) / (d * d) * inv_m;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// edge-emphasized gradient matching

fn edge_weights(rgb_gray: &ScalarImage, sigma: f64) -> Grid<f64> {
    let g = scalar_gradient(rgb_gray, &Mask::new(rgb_gray.width(), rgb_gray.height(), true));
    Grid::from_fn(rgb_gray.width(), rgb_gray.height(), |u, v| (-sigma * g.magnitude(u, v)).exp())
}

/// `(1/M) Σ exp(-σ‖∇I‖) · ‖∇pred - ∇gt‖²`. Depth gradients use the loss
/// domain as validity; the image gradient uses the whole image.
pub fn edge_emphasize_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    rgb_gray: &ScalarImage,
    mask: Option<&Mask>,
    sigma: f64,
) -> Result<f64, LossError> {
    check_shape("image vs ground truth", gt.as_grid(), rgb_gray)?;
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let weights = edge_weights(rgb_gray, sigma);
    let gp = scalar_gradient(pred.as_grid(), &domain);
    let gg = scalar_gradient(gt.as_grid(), &domain);
    let mut sum = CompensatedSum::new();
    for i in 0..domain.len() {
        if domain.data()[i] {
            let du = gp.du.data()[i] - gg.du.data()[i];
            let dv = gp.dv.data()[i] - gg.dv.data()[i];
            sum.add(weights.data()[i] * (du * du + dv * dv));
        }
    }
    Ok(sum.value() / m as f64)
}

pub(crate) fn edge_emphasize_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    rgb_gray: &ScalarImage,
    mask: Option<&Mask>,
    sigma: f64,
) -> Result<Grid<f64>, LossError> {
    check_shape("image vs ground truth", gt.as_grid(), rgb_gray)?;
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let weights = edge_weights(rgb_gray, sigma);
    let gp = scalar_gradient(pred.as_grid(), &domain);
    let gg = scalar_gradient(gt.as_grid(), &domain);
    let (w, h) = domain.shape();
    let mut out = Grid::new(w, h, 0.0);
    let scale = 2.0 / m as f64;
    for v in 0..h {
        for u in 0..w {
            if !*domain.get(u, v) {
                continue;
            }
            let i = domain.index(u, v);
            let wi = weights.data()[i] * scale;
            // a zero difference contributes nothing, including across invalid stencils
            let du = gp.du.data()[i] - gg.du.data()[i];
            if du != 0.0 {
                let j = domain.index(u + 1, v);
                out.data_mut()[j] += wi * du;
                out.data_mut()[i] -= wi * du;
            }
            let dv = gp.dv.data()[i] - gg.dv.data()[i];
            if dv != 0.0 {
                let j = domain.index(u, v + 1);
                out.data_mut()[j] += wi * dv;
                out.data_mut()[i] -= wi * dv;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// normal consistency

/// Per-pixel normal-consistency weight `exp(-λ‖∇d‖)`.
#[inline]
pub fn normal_weight(lambda: f64, gradient_magnitude: f64) -> f64 {
    (-lambda * gradient_magnitude).exp()
}

fn masked(depth: &DepthMap, domain: &Mask) -> DepthMap {
    DepthMap::from_fn(depth.width(), depth.height(), |u, v| {
        if *domain.get(u, v) {
            depth.get(u, v)
        } else {
            0.0
        }
    })
}

struct NormalSetup {
    pred: DepthMap,
    gt_normals: crate::geometry::NormalMap,
    weights: Grid<f64>,
    /// Pixels where both normals exist.
    active: Mask,
    count: usize,
}

fn normal_setup(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
    lambda: f64,
) -> Result<NormalSetup, LossError> {
    let (domain, _) = nonempty_domain(pred, gt, mask)?;
    let pred = masked(pred, &domain);
    let gt_m = masked(gt, &domain);
    let pn = normals_from_depth(&pred, k)?;
    let gn = normals_from_depth(&gt_m, k)?;
    let grad = scalar_gradient(gt.as_grid(), &domain);
    let weights = Grid::from_fn(gt.width(), gt.height(), |u, v| normal_weight(lambda, grad.magnitude(u, v)));
    let active = pn.valid.and(&gn.valid);
    let count = active.count();
    Ok(NormalSetup {
        pred,
        gt_normals: gn,
        weights,
        active,
        count,
    })
}

/// `(1/M') Σ exp(-λ‖∇gt‖) · (1 - cos∠(n_pred, n_gt))`, where the sum and
/// `M'` run over the pixels that have a normal in both maps. Returns 0 when
/// no such pixel exists.
pub fn normal_consistency_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
    lambda: f64,
) -> Result<f64, LossError> {
    let s = normal_setup(pred, gt, k, mask, lambda)?;
    if s.count == 0 {
        return Ok(0.0);
    }
    let pn = normals_from_depth(&s.pred, k)?;
    let mut sum = CompensatedSum::new();
    for i in 0..s.active.len() {
        if s.active.data()[i] {
            // 1 - cos as ½‖a - b‖², exact zero for identical unit normals
            let diff = pn.normals.data()[i] - s.gt_normals.normals.data()[i];
            sum.add(s.weights.data()[i] * 0.5 * diff.norm_squared());
        }
    }
    Ok(sum.value() / s.count as f64)
}

pub(crate) fn normal_consistency_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
    lambda: f64,
) -> Result<Grid<f64>, LossError> {
    let s = normal_setup(pred, gt, k, mask, lambda)?;
    let (w, h) = (pred.width(), pred.height());
    let mut out = Grid::new(w, h, 0.0);
    if s.count == 0 {
        return Ok(out);
    }
    let inv = 1.0 / s.count as f64;
    for v in 0..h {
        for u in 0..w {
            if !*s.active.get(u, v) {
                continue;
            }
            let c = normal_cross(&s.pred, k, u, v).expect("active pixel has a stencil");
            let cn = c.norm();
            if cn < DEGENERATE_NORMAL {
                continue;
            }
            let m = *s.gt_normals.normals.get(u, v);
            // the stored normal is c/|c| flipped toward the camera
            let orient = if c.z / cn > 0.0 { -1.0 } else { 1.0 };
            let cm = c.dot(&m);
            let d_term_dc: Vector3<f64> = -orient * (m / cn - c * (cm / (cn * cn * cn)));
            let (uf, vf) = (u as f64, v as f64);
            let (r0, r1, r2) = (k.ray(uf, vf), k.ray(uf + 1.0, vf), k.ray(uf, vf + 1.0));
            let p0 = r0 * s.pred.get(u, v);
            let pu = r1 * s.pred.get(u + 1, v) - p0;
            let pv = r2 * s.pred.get(u, v + 1) - p0;
            let dc_dz0 = -r0.cross(&pv) - pu.cross(&r0);
            let dc_dz1 = r1.cross(&pv);
            let dc_dz2 = pu.cross(&r2);
            let wi = *s.weights.get(u, v) * inv;
            for ((a, b), dc) in [((u, v), dc_dz0), ((u + 1, v), dc_dz1), ((u, v + 1), dc_dz2)] {
                let idx = out.index(a, b);
                out.data_mut()[idx] += wi * d_term_dc.dot(&dc);
            }
        }
    }
    Ok(out)
}

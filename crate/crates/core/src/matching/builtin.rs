//! Classical stand-in for a learned encoder: per-cell intensity layout plus a
//! gradient-orientation histogram, so the matching kernel can run end to end.

use std::f64::consts::TAU;

use super::{FeatureMap, FeaturePyramid, MatchError, Resolution};
use crate::geometry::{DepthMap, Grid, ScalarImage};

/// Descriptor length: 16 block means + 8 orientation bins.
pub const BUILTIN_CHANNELS: usize = 24;

const COARSE_PATCH: usize = 8;
const FINE_PATCH: usize = 4;
const BLOCKS: usize = 4;
const BINS: usize = 8;
const HISTOGRAM_WEIGHT: f64 = 0.5;
const FLAT: f64 = 1e-9;

/// Appearance features and, when depth is supplied, depth features built the
/// same way from the min-max normalized depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinFeatures {
    pub rgb: FeaturePyramid,
    pub depth: Option<FeaturePyramid>,
}

pub fn builtin_features(image: &ScalarImage, depth: Option<&DepthMap>) -> Result<BuiltinFeatures, MatchError> {
    let (w, h) = image.shape();
    if w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0 {
        return Err(MatchError::InvalidInput(format!(
            "image dimensions {w}x{h} must be non-zero multiples of 8"
        )));
    }
    let rgb = pyramid(image)?;
    let depth = match depth {
        Some(d) => {
            if (d.width(), d.height()) != (w, h) {
                return Err(MatchError::InvalidInput(format!(
                    "depth {}x{} does not match image {w}x{h}",
                    d.width(),
                    d.height()
                )));
            }
            Some(pyramid(&normalized_depth(d))?)
        }
        None => None,
    };
    Ok(BuiltinFeatures { rgb, depth })
}

/// Depth mapped to `[0, 1]` over valid pixels; invalid pixels read 0.
fn normalized_depth(d: &DepthMap) -> ScalarImage {
    let Some((lo, hi)) = d.valid_min_max() else {
        return Grid::new(d.width(), d.height(), 0.0);
    };
    let span = hi - lo;
    Grid::from_fn(d.width(), d.height(), |u, v| {
        if !d.is_valid(u, v) || span <= 0.0 {
            0.0
        } else {
            (d.get(u, v) - lo) / span
        }
    })
}

fn pyramid(image: &ScalarImage) -> Result<FeaturePyramid, MatchError> {
    let (w, h) = image.shape();
    let grads = orientation_field(image);
    let coarse = describe_grid(image, &grads, w / 8, h / 8, Resolution::Coarse, COARSE_PATCH, |c| {
        8 * c as isize
    });
    // fine cell f spans pixels [2f, 2f + 2); its 4x4 patch is centered on it
    let fine = describe_grid(image, &grads, w / 2, h / 2, Resolution::Fine, FINE_PATCH, |f| {
        2 * f as isize - 1
    });
    FeaturePyramid::new(coarse, fine)
}

/// Central-difference gradient magnitude and orientation, borders clamped.
fn orientation_field(image: &ScalarImage) -> Grid<(f64, f64)> {
    let (w, h) = image.shape();
    let at = |u: isize, v: isize| *image.get(u.clamp(0, w as isize - 1) as usize, v.clamp(0, h as isize - 1) as usize);
    Grid::from_fn(w, h, |u, v| {
        let (u, v) = (u as isize, v as isize);
        let gx = 0.5 * (at(u + 1, v) - at(u - 1, v));
        let gy = 0.5 * (at(u, v + 1) - at(u, v - 1));
        (gx.hypot(gy), gy.atan2(gx).rem_euclid(TAU))
    })
}

fn describe_grid(
    image: &ScalarImage,
    grads: &Grid<(f64, f64)>,
    gw: usize,
    gh: usize,
    resolution: Resolution,
    patch: usize,
    origin: impl Fn(usize) -> isize,
) -> FeatureMap {
    let (w, h) = image.shape();
    let mut out = FeatureMap::zeros(gw, gh, BUILTIN_CHANNELS, resolution);
    let mut values = vec![0.0; patch * patch];
    let mut orient = vec![(0.0, 0.0); patch * patch];
    for cy in 0..gh {
        for cx in 0..gw {
            let (x0, y0) = (origin(cx), origin(cy));
            for py in 0..patch {
                for px in 0..patch {
                    let u = (x0 + px as isize).clamp(0, w as isize - 1) as usize;
                    let v = (y0 + py as isize).clamp(0, h as isize - 1) as usize;
                    values[py * patch + px] = *image.get(u, v);
                    orient[py * patch + px] = *grads.get(u, v);
                }
            }
            let idx = out.cell_index(cx, cy);
            describe_patch(&values, &orient, patch, out.descriptor_mut(idx));
        }
    }
    out
}

fn center_and_normalize(v: &mut [f64]) -> bool {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= FLAT {
        v.iter_mut().for_each(|x| *x = 0.0);
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// `patch` is a multiple of [`BLOCKS`]; the layout part holds the block means.
fn describe_patch(values: &[f64], orient: &[(f64, f64)], patch: usize, out: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= FLAT {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let (blocks, hist) = out.split_at_mut(BLOCKS * BLOCKS);
    let bs = patch / BLOCKS;
    for by in 0..BLOCKS {
        for bx in 0..BLOCKS {
            let mut s = 0.0;
            for y in 0..bs {
                for x in 0..bs {
                    s += values[(by * bs + y) * patch + bx * bs + x];
                }
            }
            blocks[by * BLOCKS + bx] = s / (bs * bs) as f64;
        }
    }
    hist.iter_mut().for_each(|x| *x = 0.0);
    for &(mag, angle) in orient {
        // linear split between the two nearest bins
        let t = angle / TAU * BINS as f64;
        let b0 = t.floor();
        let frac = t - b0;
        let b0 = (b0 as usize) % BINS;
        hist[b0] += mag * (1.0 - frac);
        hist[(b0 + 1) % BINS] += mag * frac;
    }
    let has_layout = center_and_normalize(blocks);
    let has_hist = center_and_normalize(hist);
    if !has_layout && !has_hist {
        return;
    }
    hist.iter_mut().for_each(|x| *x *= HISTOGRAM_WEIGHT);
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter_mut().for_each(|x| *x /= norm);
}

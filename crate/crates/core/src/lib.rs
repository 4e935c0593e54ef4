//! Numerical toolkit for single-reference 6D pose estimation: depth-map
//! losses with exact gradients, depth-aware coarse-to-fine matching, robust
//! rigid pose solving and the pose / depth evaluation metrics.

pub mod geometry;
pub mod losses;
pub mod numeric;
pub mod matching;
pub mod pose;
pub mod metrics;
pub mod io;
pub mod pipeline;

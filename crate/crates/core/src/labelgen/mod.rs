//! Training labels from posed depth and segmentation video.
//!
//! Traversable ground is accumulated by warping the visible ground of nearby
//! frames into the target view, object footprints are carved out using the
//! target's own depth, and pixels on moving objects are flagged so the loss
//! can ignore them.

mod motion;
mod ransac;
mod untraversable;
mod warp;

pub use motion::{induced_flow, moving_object_mask};
pub use ransac::{fit_ground_plane, fit_plane_ransac, ground_points, least_squares_plane, RansacParams};
pub use untraversable::{drop_small_components, untraversable_from_depth, UntraversableParams};
pub use warp::{aggregate_traversable, forward_warp, median_hidden_depth, WarpedDepthSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap};
use crate::scene::{Flow, FrameRender};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelParams {
    /// A pixel is traversable when more than `k` warped maps support it.
    pub k: usize,
    /// Number of following frames used as warp sources.
    pub sources: usize,
    /// Flow endpoint tolerance, pixels.
    pub tau: f64,
    pub ransac: RansacParams,
    pub untraversable: UntraversableParams,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            k: 2,
            sources: 8,
            tau: 3.0,
            ransac: RansacParams::default(),
            untraversable: UntraversableParams::default(),
        }
    }
}

/// Observed motion from the target frame to the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEvidence {
    /// Maps target camera coordinates into the next frame's camera coordinates.
    pub relative_pose: Pose,
    pub optical: Flow,
}

/// Per-pixel supervision for one target frame. Pixels in neither
/// `traversable` nor `untraversable` are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTarget {
    pub traversable: BinaryMask,
    pub untraversable: BinaryMask,
    /// `μ`: `false` on pixels of moving objects.
    pub moving_mask: BinaryMask,
    pub hidden_depth: DepthMap,
    pub visible_s: BinaryMask,
    pub visible_d: DepthMap,
}

impl TrainingTarget {
    pub fn shape(&self) -> (usize, usize) {
        self.traversable.shape()
    }

    pub fn unknown(&self) -> BinaryMask {
        self.traversable.zip_map(&self.untraversable, |a, b| !a && !b).expect("shapes checked at construction")
    }

    /// Checks shapes, disjointness and that hidden depth only sits on traversable pixels.
    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        for other in [
            self.untraversable.shape(),
            self.moving_mask.shape(),
            self.hidden_depth.shape(),
            self.visible_s.shape(),
            self.visible_d.shape(),
        ] {
            ensure_same_shape(shape, other)?;
        }
        self.hidden_depth.validate_depth("hidden depth")?;
        self.visible_d.validate_depth("visible depth")?;
        if let Some((row, col, _)) = self.traversable.indexed().find(|&(r, c, &t)| t && *self.untraversable.get(r, c)) {
            return Err(Error::invalid("training target", format!("pixel ({row}, {col}) both traversable and untraversable")));
        }
        if let Some((row, col, _)) = self.hidden_depth.indexed().find(|&(r, c, &d)| d > 0.0 && !*self.traversable.get(r, c)) {
            return Err(Error::invalid("training target", format!("hidden depth on non-traversable pixel ({row}, {col})")));
        }
        Ok(())
    }
}

/// Warps every source into the target view.
pub fn warp_sources(target: &FrameRender, sources: &[FrameRender]) -> Result<WarpedDepthSet> {
    if sources.is_empty() {
        return Err(Error::NoSources);
    }
    let k = &target.camera.intrinsics;
    let maps = sources
        .iter()
        .map(|s| forward_warp(s, &Pose::relative(&s.camera.pose, &target.camera.pose), k))
        .collect();
    WarpedDepthSet::new(maps, sources.iter().map(|s| s.frame_index).collect())
}

/// Full label pipeline for one target frame.
///
/// Without flow evidence every pixel keeps `μ = 1`.
pub fn build_training_target(
    target: &FrameRender,
    sources: &[FrameRender],
    params: &LabelParams,
    flow: Option<&FlowEvidence>,
) -> Result<TrainingTarget> {
    let warped = warp_sources(target, sources)?;
    let k = &target.camera.intrinsics;
    let raw_traversable = aggregate_traversable(&warped, params.k);
    let hidden_depth = median_hidden_depth(&warped);

    let plane = fit_ground_plane(&target.depth, &target.seg, k, &params.ransac)?;
    let untraversable = untraversable_from_depth(&target.depth, &target.seg, &plane, k, &params.untraversable)?;
    let traversable = raw_traversable.minus(&untraversable)?;
    let hidden_depth = hidden_depth.masked(&traversable)?;

    let moving_mask = match flow {
        Some(evidence) => {
            let induced = induced_flow(&target.depth, &evidence.relative_pose, k);
            moving_object_mask(&induced, &evidence.optical, params.tau)?
        }
        None => BinaryMask::filled(target.depth.height(), target.depth.width(), true),
    };

    let out = TrainingTarget {
        traversable,
        untraversable,
        moving_mask,
        hidden_depth,
        visible_s: target.seg.clone(),
        visible_d: target.depth.clone(),
    };
    out.validate()?;
    Ok(out)
}

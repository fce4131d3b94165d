//! Freespace and footprint segmentation scores, and hidden-depth metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap, ProbMap};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Predicted depths are clamped below to this before ratio metrics, meters.
pub const MIN_PRED_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub iou: f64,
    pub f1: f64,
}

impl SegScores {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let iou_den = tp + fp + fn_;
        let f1_den = 2 * tp + fp + fn_;
        Self {
            tp,
            fp,
            fn_,
            tn,
            iou: if iou_den == 0 { 0.0 } else { tp as f64 / iou_den as f64 },
            f1: if f1_den == 0 { 0.0 } else { 2.0 * tp as f64 / f1_den as f64 },
        }
    }

    pub fn precision(&self) -> f64 {
        let den = self.tp + self.fp;
        if den == 0 {
            0.0
        } else {
            self.tp as f64 / den as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let den = self.tp + self.fn_;
        if den == 0 {
            0.0
        } else {
            self.tp as f64 / den as f64
        }
    }
}

/// Confusion counts of two binary masks within `region`.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask, region: &BinaryMask) -> Result<SegScores> {
    ensure_same_shape(gt.shape(), pred.shape())?;
    ensure_same_shape(gt.shape(), region.shape())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for ((&p, &g), &inside) in pred.iter().zip(gt.iter()).zip(region.iter()) {
        if !inside {
            continue;
        }
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(SegScores::from_counts(tp, fp, fn_, tn))
}

/// Thresholds `pred` (`>= threshold` is positive) and scores it against `gt` inside `region`.
pub fn segmentation_eval(pred: &ProbMap, gt: &BinaryMask, region: &BinaryMask, threshold: f64) -> Result<SegScores> {
    confusion(&pred.threshold(threshold), gt, region)
}

/// Hidden-ground prediction scored over the whole image.
pub fn freespace_eval(pred_s_star: &ProbMap, gt_s_star: &BinaryMask, threshold: f64) -> Result<SegScores> {
    let region = BinaryMask::filled(gt_s_star.height(), gt_s_star.width(), true);
    segmentation_eval(pred_s_star, gt_s_star, &region, threshold)
}

/// Object footprints scored inside the ground region: a pixel is a footprint
/// when it is in the region but not hidden-traversable.
pub fn footprint_eval(pred_s_star: &ProbMap, gt_s_star: &BinaryMask, region: &BinaryMask, threshold: f64) -> Result<SegScores> {
    ensure_same_shape(gt_s_star.shape(), pred_s_star.shape())?;
    let pred_fp = region.minus(&pred_s_star.threshold(threshold))?;
    let gt_fp = region.minus(gt_s_star)?;
    confusion(&pred_fp, &gt_fp, region)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthScores {
    pub a1: f64,
    pub rmse: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub pixels: u64,
}

/// Depth metrics over pixels where `gt > 0`.
pub fn depth_eval(pred: &DepthMap, gt: &DepthMap) -> Result<DepthScores> {
    depth_eval_masked(pred, gt, &gt.support())
}

/// Depth metrics over pixels where `mask` holds and `gt > 0`.
pub fn depth_eval_masked(pred: &DepthMap, gt: &DepthMap, mask: &BinaryMask) -> Result<DepthScores> {
    ensure_same_shape(gt.shape(), pred.shape())?;
    ensure_same_shape(gt.shape(), mask.shape())?;
    let mut n = 0u64;
    let (mut a1, mut sq, mut abs_rel, mut sq_rel) = (0u64, 0.0, 0.0, 0.0);
    for ((&p, &g), &m) in pred.iter().zip(gt.iter()).zip(mask.iter()) {
        if !m || g <= 0.0 {
            continue;
        }
        n += 1;
        let p = p.max(MIN_PRED_DEPTH);
        if (g / p).max(p / g) < 1.25 {
            a1 += 1;
        }
        let e = g - p;
        sq += e * e;
        abs_rel += e.abs() / g;
        sq_rel += e * e / g;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let nf = n as f64;
    Ok(DepthScores {
        a1: a1 as f64 / nf,
        rmse: (sq / nf).sqrt(),
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        pixels: n,
    })
}

/// Per-image results averaged with equal weight per image. Images that could
/// not be scored are listed rather than silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate<T> {
    pub mean: T,
    pub images: usize,
    pub excluded: Vec<(String, String)>,
}

pub fn mean_seg(scores: &[SegScores]) -> Option<SegScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mut out = SegScores::from_counts(
        scores.iter().map(|s| s.tp).sum(),
        scores.iter().map(|s| s.fp).sum(),
        scores.iter().map(|s| s.fn_).sum(),
        scores.iter().map(|s| s.tn).sum(),
    );
    out.iou = scores.iter().map(|s| s.iou).sum::<f64>() / n;
    out.f1 = scores.iter().map(|s| s.f1).sum::<f64>() / n;
    Some(out)
}

pub fn mean_depth(scores: &[DepthScores]) -> Option<DepthScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some(DepthScores {
        a1: scores.iter().map(|s| s.a1).sum::<f64>() / n,
        rmse: scores.iter().map(|s| s.rmse).sum::<f64>() / n,
        abs_rel: scores.iter().map(|s| s.abs_rel).sum::<f64>() / n,
        sq_rel: scores.iter().map(|s| s.sq_rel).sum::<f64>() / n,
        pixels: scores.iter().map(|s| s.pixels).sum(),
    })
}

//! Baseline predictors of hidden ground and a loader for externally produced predictions.

use std::path::Path;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Plane};
use crate::io::{read_raster, RasterData};
use crate::labelgen::{fit_ground_plane, RansacParams};
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap, FootprintFrame, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    VisibleOnly,
    ConvexHull,
    AllTraversable,
    NoneTraversable,
    GroundTruth,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::VisibleOnly,
        BaselineKind::ConvexHull,
        BaselineKind::AllTraversable,
        BaselineKind::NoneTraversable,
        BaselineKind::GroundTruth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::VisibleOnly => "visible_only",
            BaselineKind::ConvexHull => "convex_hull",
            BaselineKind::AllTraversable => "all_traversable",
            BaselineKind::NoneTraversable => "none_traversable",
            BaselineKind::GroundTruth => "ground_truth",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("baseline kind", s.to_string()))
    }
}

/// 2-D cross product of `(a - o)` and `(b - o)`.
#[inline]
fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of the set pixel centers, as `(col, row)` vertices in
/// counter-clockwise order (monotone chain, collinear points dropped).
pub fn convex_hull(mask: &BinaryMask) -> Vec<(i64, i64)> {
    // only the extreme pixels of each row can be hull vertices
    let mut points = Vec::new();
    for row in 0..mask.height() {
        let cols: Vec<usize> = (0..mask.width()).filter(|&c| *mask.get(row, c)).collect();
        if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
            points.push((first as i64, row as i64));
            if last != first {
                points.push((last as i64, row as i64));
            }
        }
    }
    points.sort_unstable();
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies in the convex polygon `hull` (boundary included).
fn hull_contains(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Fills the convex hull of the set pixels. Pixels whose centers lie on the
/// hull boundary are inside.
pub fn convex_hull_fill(mask: &BinaryMask) -> BinaryMask {
    let hull = convex_hull(mask);
    let mut out = BinaryMask::filled(mask.height(), mask.width(), false);
    if hull.is_empty() {
        return out;
    }
    let row_min = hull.iter().map(|p| p.1).min().unwrap();
    let row_max = hull.iter().map(|p| p.1).max().unwrap();
    let col_min = hull.iter().map(|p| p.0).min().unwrap();
    let col_max = hull.iter().map(|p| p.0).max().unwrap();
    for row in row_min..=row_max {
        // the hull is convex, so each row is one run; find its ends
        let first = (col_min..=col_max).find(|&c| hull_contains(&hull, (c, row)));
        if let Some(first) = first {
            let last = (first..=col_max).rev().find(|&c| hull_contains(&hull, (c, row))).unwrap();
            for col in first..=last {
                out.set(row as usize, col as usize, true);
            }
        }
    }
    out
}

/// Depth to `plane` along each pixel ray where `mask` holds; 0 elsewhere and
/// where the ray does not meet the plane in front of the camera.
pub fn plane_depth(plane: &Plane, k: &Intrinsics, mask: &BinaryMask) -> DepthMap {
    DepthMap::from_fn(k.height, k.width, |row, col| {
        if !*mask.get(row, col) {
            return 0.0;
        }
        let ray = k.ray_direction(Point2::new(col as f64, row as f64));
        match plane.intersect(&Vector3::zeros(), &ray) {
            Some(t) if t > 0.0 && t.is_finite() => t,
            _ => 0.0,
        }
    })
}

/// Inputs available to the baselines for one frame.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInputs<'a> {
    pub seg: &'a BinaryMask,
    pub depth: &'a DepthMap,
    pub intrinsics: &'a Intrinsics,
    pub ransac: RansacParams,
    /// Oracle `(S*, D*)`, needed by [`BaselineKind::GroundTruth`].
    pub ground_truth: Option<(&'a BinaryMask, &'a DepthMap)>,
}

/// Runs a baseline. Hidden depth for the non-oracle kinds comes from a RANSAC
/// plane fitted to the visible ground.
pub fn baseline_predict(kind: BaselineKind, inputs: &BaselineInputs<'_>) -> Result<FootprintFrame> {
    let shape = inputs.seg.shape();
    ensure_same_shape(shape, inputs.depth.shape())?;
    ensure_same_shape(shape, inputs.intrinsics.shape())?;
    let s = inputs.seg.to_prob();
    let d = inputs.depth.clone();
    let (h, w) = shape;

    let s_star_mask = match kind {
        BaselineKind::VisibleOnly => inputs.seg.clone(),
        BaselineKind::ConvexHull => convex_hull_fill(inputs.seg),
        BaselineKind::AllTraversable => BinaryMask::filled(h, w, true),
        BaselineKind::NoneTraversable => BinaryMask::filled(h, w, false),
        BaselineKind::GroundTruth => {
            let (gt_s, gt_d) = inputs.ground_truth.ok_or(Error::MissingInput("ground-truth S* and D*"))?;
            ensure_same_shape(shape, gt_s.shape())?;
            ensure_same_shape(shape, gt_d.shape())?;
            return FootprintFrame::new(s, d, gt_s.to_prob(), gt_d.masked(gt_s)?);
        }
    };
    let d_star = if s_star_mask.count() == 0 {
        DepthMap::filled(h, w, 0.0)
    } else {
        let plane = fit_ground_plane(inputs.depth, inputs.seg, inputs.intrinsics, &inputs.ransac)?;
        plane_depth(&plane, inputs.intrinsics, &s_star_mask)
    };
    FootprintFrame::new(s, d, s_star_mask.to_prob(), d_star)
}

fn load_prob(path: &Path) -> Result<ProbMap> {
    match read_raster(path)? {
        RasterData::Float(r) => Ok(r),
        RasterData::Mask(m) => Ok(m.to_prob()),
        RasterData::Flow(_) => Err(Error::invalid("prediction", format!("{} holds a flow raster", path.display()))),
    }
}

fn load_depth(path: &Path) -> Result<DepthMap> {
    match read_raster(path)? {
        RasterData::Float(r) => Ok(r),
        _ => Err(Error::invalid("prediction", format!("{} is not a single-channel float raster", path.display()))),
    }
}

/// Paths of the four channels of a stored prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionPaths {
    pub s: std::path::PathBuf,
    pub d: std::path::PathBuf,
    pub s_star: std::path::PathBuf,
    pub d_star: std::path::PathBuf,
}

impl PredictionPaths {
    /// The conventional layout inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            s: dir.join("s.pfm"),
            d: dir.join("d.pfm"),
            s_star: dir.join("s_star.pfm"),
            d_star: dir.join("d_star.pfm"),
        }
    }
}

/// Loads and validates a prediction. Probability channels may be PFM or PGM.
pub fn load_prediction(paths: &PredictionPaths) -> Result<FootprintFrame> {
    FootprintFrame::new(
        load_prob(&paths.s)?,
        load_depth(&paths.d)?,
        load_prob(&paths.s_star)?,
        load_depth(&paths.d_star)?,
    )
}

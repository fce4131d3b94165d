//! Object footprints from the target frame's own depth: points standing above
//! the ground plane are dropped onto it, splatted and reprojected.

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, Intrinsics, Plane};
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UntraversableParams {
    /// Spacing of the 3x3 splat grid, meters.
    pub splat_halfwidth: f64,
    /// Points must stand this far above the plane to count as objects, meters.
    pub height_threshold: f64,
    /// 4-connected components smaller than this are dropped.
    pub min_component_px: usize,
}

impl Default for UntraversableParams {
    fn default() -> Self {
        Self {
            splat_halfwidth: 0.05,
            height_threshold: 0.05,
            min_component_px: 20,
        }
    }
}

/// Pixels that are definitely not walkable because an object stands on them.
///
/// `plane` is in camera coordinates with its normal pointing toward the camera.
pub fn untraversable_from_depth(
    depth: &DepthMap,
    seg: &BinaryMask,
    plane: &Plane,
    k: &Intrinsics,
    params: &UntraversableParams,
) -> Result<BinaryMask> {
    ensure_same_shape(depth.shape(), seg.shape())?;
    if !((plane.normal.norm() - 1.0).abs() < 1e-9) || !plane.offset.is_finite() {
        return Err(Error::invalid("plane", "normal must be unit length"));
    }
    if !(params.splat_halfwidth >= 0.0) || !params.height_threshold.is_finite() {
        return Err(Error::invalid("untraversable params", "splat width and height threshold must be finite and non-negative"));
    }
    let (u_axis, v_axis) = in_plane_axes(&plane.normal);
    let h = params.splat_halfwidth;
    let offsets: Vec<Vector3<f64>> = [-h, 0.0, h]
        .iter()
        .flat_map(|&a| [-h, 0.0, h].map(|b| u_axis * a + v_axis * b))
        .collect();

    let mut marked = BinaryMask::filled(depth.height(), depth.width(), false);
    for (row, col, &d) in depth.indexed() {
        if d <= 0.0 || *seg.get(row, col) {
            continue;
        }
        let p = k.ray_direction(Point2::new(col as f64, row as f64)) * d;
        if plane.signed_distance(&p) <= params.height_threshold {
            continue;
        }
        let base = plane.project_point(&p);
        for off in &offsets {
            if let Some((pixel, _)) = project(&(base + off), k) {
                if let Some((r, c)) = marked.cell_of(pixel.x, pixel.y) {
                    marked.set(r, c, true);
                }
            }
        }
    }
    let marked = marked.minus(seg)?;
    Ok(drop_small_components(&marked, params.min_component_px))
}

/// Orthonormal basis of the plane, with the first axis as close to camera x as possible.
fn in_plane_axes(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let reference = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
    let u = (reference - normal * normal.dot(&reference)).normalize();
    let v = normal.cross(&u);
    (u, v)
}

/// Clears 4-connected components with fewer than `min_size` pixels.
pub fn drop_small_components(mask: &BinaryMask, min_size: usize) -> BinaryMask {
    let (h, w) = mask.shape();
    let mut out = mask.clone();
    let mut seen = BinaryMask::filled(h, w, false);
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..h * w {
        let (sr, sc) = (start / w, start % w);
        if !*mask.get(sr, sc) || *seen.get(sr, sc) {
            continue;
        }
        component.clear();
        stack.push((sr, sc));
        seen.set(sr, sc, true);
        while let Some((r, c)) = stack.pop() {
            component.push((r, c));
            let neighbors = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbors {
                if nr < h && nc < w && *mask.get(nr, nc) && !*seen.get(nr, nc) {
                    seen.set(nr, nc, true);
                    stack.push((nr, nc));
                }
            }
        }
        if component.len() < min_size {
            for &(r, c) in &component {
                out.set(r, c, false);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    #[test]
    fn small_components_are_dropped() {
        #[rustfmt::skip]
        let bits = [
            1, 1, 0, 0, 1,
            1, 0, 0, 0, 1,
            0, 0, 1, 0, 1,
            0, 1, 0, 0, 1,
        ];
        let mask = Raster::from_vec(4, 5, bits.iter().map(|&b| b == 1).collect()).unwrap();
        let out = drop_small_components(&mask, 3);
        // diagonal neighbours are separate components under 4-connectivity
        let expect = [
            1, 1, 0, 0, 1,
            1, 0, 0, 0, 1,
            0, 0, 0, 0, 1,
            0, 0, 0, 0, 1,
        ];
        assert_eq!(out.as_slice(), expect.map(|b| b == 1).as_slice());
        assert_eq!(drop_small_components(&mask, 0), mask);
    }

    #[test]
    fn axes_are_orthonormal_and_in_plane() {
        for n in [Vector3::y(), -Vector3::y(), Vector3::new(0.9, 0.1, 0.2).normalize(), Vector3::x()] {
            let (u, v) = in_plane_axes(&n);
            assert!(u.dot(&n).abs() < 1e-12 && v.dot(&n).abs() < 1e-12 && u.dot(&v).abs() < 1e-12);
            assert!((u.norm() - 1.0).abs() < 1e-12 && (v.norm() - 1.0).abs() < 1e-12);
        }
    }
}

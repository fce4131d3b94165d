//! Moving-object masking: flow induced by camera motion alone versus observed flow.

use nalgebra::Point2;

use crate::error::Result;
use crate::geometry::{project, Intrinsics, Pose};
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap, FlowField};
use crate::scene::Flow;

/// Flow a static scene would produce. `relative_pose` maps the current camera
/// frame into the next one.
pub fn induced_flow(depth: &DepthMap, relative_pose: &Pose, k: &Intrinsics) -> Flow {
    let (h, w) = depth.shape();
    let mut flow = FlowField::filled(h, w, [0.0, 0.0]);
    let mut valid = BinaryMask::filled(h, w, false);
    for (row, col, &d) in depth.indexed() {
        if d <= 0.0 {
            continue;
        }
        let p = k.ray_direction(Point2::new(col as f64, row as f64)) * d;
        if let Some((pixel, _)) = project(&relative_pose.transform_point(&p), k) {
            flow.set(row, col, [pixel.x - col as f64, pixel.y - row as f64]);
            valid.set(row, col, true);
        }
    }
    Flow { flow, valid }
}

/// Per-pixel weight `μ`: `false` where both flows are valid and their
/// endpoints differ by more than `tau` pixels, `true` elsewhere.
pub fn moving_object_mask(induced: &Flow, optical: &Flow, tau: f64) -> Result<BinaryMask> {
    let shape = induced.flow.shape();
    for other in [induced.valid.shape(), optical.flow.shape(), optical.valid.shape()] {
        ensure_same_shape(shape, other)?;
    }
    Ok(BinaryMask::from_fn(shape.0, shape.1, |r, c| {
        if !*induced.valid.get(r, c) || !*optical.valid.get(r, c) {
            return true;
        }
        let [a, b] = *induced.flow.get(r, c);
        let [x, y] = *optical.flow.get(r, c);
        (a - x).hypot(b - y) <= tau
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use nalgebra::Vector3;

    fn flow1(du: f64, dv: f64, valid: bool) -> Flow {
        Flow {
            flow: Raster::filled(1, 1, [du, dv]),
            valid: Raster::filled(1, 1, valid),
        }
    }

    #[test]
    fn endpoint_difference_against_tau() {
        let base = flow1(0.0, 0.0, true);
        assert!(!*moving_object_mask(&base, &flow1(4.0, 0.0, true), 3.0).unwrap().get(0, 0));
        assert!(*moving_object_mask(&base, &flow1(3.0, 0.0, true), 3.0).unwrap().get(0, 0));
        assert!(*moving_object_mask(&base, &flow1(2.0, 2.0, true), 3.0).unwrap().get(0, 0));
        assert!(!*moving_object_mask(&base, &flow1(2.5, 2.5, true), 3.0).unwrap().get(0, 0));
        // no evidence of motion without both flows
        assert!(*moving_object_mask(&base, &flow1(40.0, 0.0, false), 3.0).unwrap().get(0, 0));
        assert!(*moving_object_mask(&flow1(0.0, 0.0, false), &flow1(40.0, 0.0, true), 3.0).unwrap().get(0, 0));
    }

    #[test]
    fn identity_pose_gives_zero_flow() {
        let k = Intrinsics::centered(50.0, 20, 10).unwrap();
        let mut depth = DepthMap::filled(10, 20, 2.0);
        depth.set(3, 3, 0.0);
        let f = induced_flow(&depth, &Pose::identity(), &k);
        assert!(!*f.valid.get(3, 3));
        assert_eq!(f.valid.count(), 199);
        assert!(f.flow.iter().all(|&[u, v]| u.abs() < 1e-12 && v.abs() < 1e-12));
    }

    #[test]
    fn forward_motion_expands_from_principal_point() {
        let k = Intrinsics::centered(50.0, 21, 11).unwrap();
        let depth = DepthMap::filled(11, 21, 4.0);
        // next camera is 1 m further along +z: points come closer
        let rel = Pose::translation_only(Vector3::new(0.0, 0.0, -1.0));
        let f = induced_flow(&depth, &rel, &k);
        for (r, c, &[du, dv]) in f.flow.indexed() {
            let x = c as f64 - k.cx;
            let y = r as f64 - k.cy;
            // analytic: new offset = offset * z / (z - 1)
            assert!((du - x / 3.0).abs() < 1e-9 && (dv - y / 3.0).abs() < 1e-9);
            assert!(du * x >= 0.0 && dv * y >= 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = flow1(0.0, 0.0, true);
        let b = Flow {
            flow: Raster::filled(2, 1, [0.0, 0.0]),
            valid: Raster::filled(2, 1, true),
        };
        assert!(moving_object_mask(&a, &b, 3.0).is_err());
    }
}

//! Ground plane estimation from the visible ground pixels of a depth map.

use nalgebra::{Matrix3, Point2, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Plane};
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Meters.
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 0.01,
            min_inlier_fraction: 0.2,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("ransac", "iterations must be at least 1"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::invalid("ransac", "inlier threshold must be positive"));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::invalid("ransac", "min inlier fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Camera-frame points of pixels labelled ground with a valid depth.
pub fn ground_points(depth: &DepthMap, seg: &BinaryMask, k: &Intrinsics) -> Result<Vec<Vector3<f64>>> {
    ensure_same_shape(depth.shape(), seg.shape())?;
    Ok(depth
        .indexed()
        .filter(|&(r, c, &d)| d > 0.0 && *seg.get(r, c))
        .map(|(r, c, &d)| k.ray_direction(Point2::new(c as f64, r as f64)) * d)
        .collect())
}

/// Three-point RANSAC over the backprojected ground pixels, refined by a
/// least-squares fit to the best inlier set. The returned plane is in camera
/// coordinates, with the camera center on its positive side.
pub fn fit_ground_plane(depth: &DepthMap, seg: &BinaryMask, k: &Intrinsics, params: &RansacParams) -> Result<Plane> {
    params.validate()?;
    let points = ground_points(depth, seg, k)?;
    fit_plane_ransac(&points, params)
}

pub fn fit_plane_ransac(points: &[Vector3<f64>], params: &RansacParams) -> Result<Plane> {
    params.validate()?;
    if points.len() < 3 {
        return Err(Error::PlaneFit(format!("{} ground points, need at least 3", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations {
        let idx = sample(&mut rng, points.len(), 3);
        let Some(candidate) = Plane::from_points(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)]) else {
            continue;
        };
        let inliers = count_inliers(points, &candidate, params.inlier_threshold);
        if best.as_ref().is_none_or(|(n, _)| inliers > *n) {
            best = Some((inliers, candidate));
        }
    }
    let Some((_, candidate)) = best else {
        return Err(Error::PlaneFit("every sample was degenerate".into()));
    };

    let inliers: Vec<Vector3<f64>> = points
        .iter()
        .filter(|p| candidate.signed_distance(p).abs() <= params.inlier_threshold)
        .copied()
        .collect();
    let refined = least_squares_plane(&inliers).unwrap_or(candidate);
    let count = count_inliers(points, &refined, params.inlier_threshold).max(inliers.len());
    let fraction = count as f64 / points.len() as f64;
    if fraction < params.min_inlier_fraction {
        return Err(Error::PlaneFit(format!(
            "best inlier fraction {fraction:.3} below {}",
            params.min_inlier_fraction
        )));
    }
    Ok(refined.oriented_toward(&Vector3::zeros()))
}

fn count_inliers(points: &[Vector3<f64>], plane: &Plane, threshold: f64) -> usize {
    points.iter().filter(|p| plane.signed_distance(p).abs() <= threshold).count()
}

/// Total least squares: the normal is the eigenvector of the scatter matrix
/// with the smallest eigenvalue.
pub fn least_squares_plane(points: &[Vector3<f64>]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (i, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    Plane::new(normal, -normal.dot(&centroid)).ok()
}

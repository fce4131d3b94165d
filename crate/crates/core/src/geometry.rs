//! Pinhole camera model, rigid poses, planes and analytic ray casting.
//!
//! Conventions: right-handed frames, the camera looks along `+z` with image
//! `x` to the right and `y` down. Pixel centers sit at integer coordinates.

use nalgebra::{Matrix3, Matrix4, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scene;

/// Rays closer than this are not reported as hits.
pub const MIN_HIT_T: f64 = 1e-6;
/// Points at or below this camera depth do not project.
pub const MIN_PROJECT_Z: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Principal point at the image center, square pixels.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("intrinsics", "focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("intrinsics", "principal point outside the image"));
        }
        Ok(())
    }

    /// `(height, width)`, matching raster shapes.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Camera-frame direction through `pixel` with unit z component.
    #[inline]
    pub fn ray_direction(&self, pixel: Point2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }
}

/// Projects a camera-frame point. Returns `None` behind (or on) the image plane;
/// out-of-frame pixels are returned unclamped.
#[inline]
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Option<(Point2<f64>, f64)> {
    if point.z <= MIN_PROJECT_Z {
        return None;
    }
    let pixel = Point2::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    );
    Some((pixel, point.z))
}

/// Lifts `pixel` at z-depth `depth` into the camera frame.
pub fn backproject(pixel: Point2<f64>, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::invalid("depth", format!("backprojection needs depth > 0, got {depth}")));
    }
    Ok(k.ray_direction(pixel) * depth)
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= ORTHONORMAL_TOL) {
            return Err(Error::invalid("pose", format!("rotation not orthonormal (max deviation {ortho:e})")));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::invalid("pose", format!("rotation determinant {det}")));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("pose", "non-finite translation"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation_only(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// A camera at `eye` looking at `target`, with image-up along `world_up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, world_up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::invalid("pose", "look_at target coincides with eye"));
        }
        let z = forward.normalize();
        let x = z.cross(&world_up);
        if x.norm() < 1e-9 {
            return Err(Error::invalid("pose", "look_at direction parallel to up vector"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        Ok(Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: eye,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Transform taking points in `source`'s camera frame into `target`'s.
    pub fn relative(source: &Pose, target: &Pose) -> Self {
        target.inverse().compose(source)
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4]) -> Result<Self> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid("pose", "bottom row of a 4x4 pose must be [0, 0, 0, 1]"));
        }
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Self::new(rotation, Vector3::new(m[0][3], m[1][3], m[2][3]))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_matrix().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = <[[f64; 4]; 4]>::deserialize(deserializer)?;
        Pose::from_matrix(&m).map_err(serde::de::Error::custom)
    }
}

/// Points `p` on the plane satisfy `normal · p + offset = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// Normalizes `normal` (and scales `offset` to match).
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !offset.is_finite() {
            return Err(Error::invalid("plane", "degenerate normal"));
        }
        Ok(Self {
            normal: normal / n,
            offset: offset / n,
        })
    }

    /// The horizontal plane `y = 0` with its normal pointing up.
    pub fn ground() -> Self {
        Self {
            normal: Vector3::y(),
            offset: 0.0,
        }
    }

    pub fn from_points(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        if norm < 1e-12 {
            return None;
        }
        let normal = n / norm;
        Some(Self {
            normal,
            offset: -normal.dot(a),
        })
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }

    /// Flips the plane so that `point` lies on its non-negative side.
    pub fn oriented_toward(self, point: &Vector3<f64>) -> Self {
        if self.signed_distance(point) < 0.0 {
            Self {
                normal: -self.normal,
                offset: -self.offset,
            }
        } else {
            self
        }
    }

    /// Expresses this plane (given in `pose`'s source frame) in `pose`'s target frame.
    pub fn transformed(&self, pose: &Pose) -> Self {
        let normal = pose.transform_vector(&self.normal);
        let offset = self.offset - normal.dot(pose.translation());
        Self { normal, offset }
    }

    /// Ray parameter where `origin + t·dir` meets the plane, if not parallel.
    #[inline]
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        Some(-(self.normal.dot(origin) + self.offset) / denom)
    }

    /// Angle between normals in degrees, ignoring orientation.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        self.normal.dot(&other.normal).abs().min(1.0).acos().to_degrees()
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn from_center(center: &Vector3<f64>, half_extents: &Vector3<f64>) -> Self {
        Self {
            min: center - half_extents,
            max: center + half_extents,
        }
    }

    /// Slab test. Returns the `(entry, exit)` ray parameters when the infinite
    /// line meets the box.
    pub fn slab(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for axis in 0..3 {
            let o = origin[axis];
            let d = dir[axis];
            if d.abs() < 1e-15 {
                if o < self.min[axis] || o > self.max[axis] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut t0 = (self.min[axis] - o) * inv;
            let mut t1 = (self.max[axis] - o) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
        Some((t_min, t_max))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    Ground,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Meters along the unit-length world ray.
    pub t: f64,
    /// `0` for the ground, `i + 1` for obstacle `i`.
    pub surface_id: usize,
    pub kind: SurfaceKind,
}

/// World-space ray through a pixel center: `(origin, unit direction)`.
pub fn pixel_ray(pixel: Point2<f64>, k: &Intrinsics, pose: &Pose) -> (Vector3<f64>, Vector3<f64>) {
    let dir = pose.transform_vector(&k.ray_direction(pixel)).normalize();
    (*pose.translation(), dir)
}

/// All surfaces hit by the ray through `pixel`, nearest first.
///
/// Obstacles are taken at their rest positions; use [`Scene::at_frame`] to
/// advance moving obstacles first.
pub fn cast_ray(pixel: Point2<f64>, k: &Intrinsics, pose: &Pose, scene: &Scene) -> Vec<Hit> {
    let (origin, dir) = pixel_ray(pixel, k, pose);
    cast_world_ray(&origin, &dir, scene)
}

pub fn cast_world_ray(origin: &Vector3<f64>, dir: &Vector3<f64>, scene: &Scene) -> Vec<Hit> {
    let mut hits = Vec::new();
    if let Some(t) = scene.ground_hit(origin, dir) {
        hits.push(Hit {
            t,
            surface_id: 0,
            kind: SurfaceKind::Ground,
        });
    }
    for (i, obstacle) in scene.obstacles.iter().enumerate() {
        if let Some((entry, exit)) = obstacle.aabb().slab(origin, dir) {
            let t = if entry > MIN_HIT_T { entry } else { exit };
            if t > MIN_HIT_T {
                hits.push(Hit {
                    t,
                    surface_id: i + 1,
                    kind: SurfaceKind::Obstacle,
                });
            }
        }
    }
    hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.surface_id.cmp(&b.surface_id)));
    hits
}

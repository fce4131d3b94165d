//! Synthetic worlds: a finite ground rectangle on `y = 0` plus axis-aligned
//! boxes, rendered exactly. Stands in for captured depth, segmentation,
//! optical flow and human annotation, and doubles as the ground-truth oracle.

use nalgebra::{Point2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cast_world_ray, pixel_ray, project, Aabb, Intrinsics, Plane, Pose, SurfaceKind, MIN_HIT_T};
use crate::predictors::convex_hull_fill;
use crate::raster::{BinaryMask, DepthMap, FlowField, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    /// Meters per frame.
    #[serde(default = "Vector3::zeros")]
    pub velocity: Vector3<f64>,
}

impl Obstacle {
    /// A static box of the given size standing on the ground at `(x, z)`.
    pub fn resting(x: f64, z: f64, size: Vector3<f64>) -> Self {
        let half = size / 2.0;
        Self {
            center: Vector3::new(x, half.y, z),
            half_extents: half,
            velocity: Vector3::zeros(),
        }
    }

    pub fn with_velocity(mut self, velocity: Vector3<f64>) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_center(&self.center, &self.half_extents)
    }

    pub fn at_frame(&self, frame_index: i64) -> Self {
        Self {
            center: self.center + self.velocity * frame_index as f64,
            ..*self
        }
    }

    pub fn is_moving(&self) -> bool {
        self.velocity != Vector3::zeros()
    }

    /// Whether the ground point `(x, z)` lies strictly inside the base rectangle.
    #[inline]
    pub fn footprint_contains(&self, x: f64, z: f64) -> bool {
        (x - self.center.x).abs() < self.half_extents.x && (z - self.center.z).abs() < self.half_extents.z
    }
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl GroundExtent {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.z_max - self.z_min).max(0.0)
    }

    #[inline]
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub ground_extent: GroundExtent,
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "Plane::ground")]
    pub ground_plane: Plane,
}

impl Scene {
    pub fn new(ground_extent: GroundExtent, obstacles: Vec<Obstacle>) -> Result<Self> {
        let scene = Self {
            ground_extent,
            obstacles,
            ground_plane: Plane::ground(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ground_extent.area() > 0.0) {
            return Err(Error::invalid("scene", "ground extent has no area"));
        }
        if self.ground_plane != Plane::ground() {
            return Err(Error::invalid("scene", "ground plane must be y = 0 with an upward normal"));
        }
        let e = &self.ground_extent;
        for (i, o) in self.obstacles.iter().enumerate() {
            if !o.half_extents.iter().all(|&h| h > 0.0) {
                return Err(Error::invalid("scene", format!("obstacle {i} has a non-positive half extent")));
            }
            if (o.center.y - o.half_extents.y).abs() > 1e-9 {
                return Err(Error::invalid("scene", format!("obstacle {i} does not rest on the ground")));
            }
            let inside = o.center.x - o.half_extents.x >= e.x_min
                && o.center.x + o.half_extents.x <= e.x_max
                && o.center.z - o.half_extents.z >= e.z_min
                && o.center.z + o.half_extents.z <= e.z_max;
            if !inside {
                return Err(Error::invalid("scene", format!("obstacle {i} footprint leaves the ground extent")));
            }
        }
        Ok(())
    }

    /// The scene with every obstacle advanced to `frame_index`.
    pub fn at_frame(&self, frame_index: i64) -> Self {
        Self {
            ground_extent: self.ground_extent,
            obstacles: self.obstacles.iter().map(|o| o.at_frame(frame_index)).collect(),
            ground_plane: self.ground_plane,
        }
    }

    /// Ray parameter of the ground-plane intersection, when it is in front of the
    /// origin and inside the ground rectangle. Footprints are not excluded.
    #[inline]
    pub fn ground_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let t = self.ground_plane.intersect(origin, dir)?;
        if t <= MIN_HIT_T {
            return None;
        }
        let p = origin + dir * t;
        self.ground_extent.contains(p.x, p.z).then_some(t)
    }

    /// Whether the ground point `(x, z)` is walkable: inside the extent and outside every footprint.
    pub fn is_traversable(&self, x: f64, z: f64) -> bool {
        self.ground_extent.contains(x, z) && !self.obstacles.iter().any(|o| o.footprint_contains(x, z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.intrinsics.shape()
    }

    fn pixels(&self) -> impl Iterator<Item = (usize, usize)> {
        let (h, w) = self.shape();
        (0..h).flat_map(move |r| (0..w).map(move |c| (r, c)))
    }

    /// Unit world ray through a pixel center and the factor converting
    /// distance along it to camera z-depth.
    #[inline]
    fn ray(&self, row: usize, col: usize) -> (Vector3<f64>, Vector3<f64>, f64) {
        let pixel = Point2::new(col as f64, row as f64);
        let (origin, dir) = pixel_ray(pixel, &self.intrinsics, &self.pose);
        let z_per_t = 1.0 / self.intrinsics.ray_direction(pixel).norm();
        (origin, dir, z_per_t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRender {
    /// Nearest-surface z-depth; 0 where nothing is hit.
    pub depth: DepthMap,
    /// 1 where the nearest surface is ground.
    pub seg: BinaryMask,
    pub camera: Camera,
    pub frame_index: i64,
}

impl FrameRender {
    pub fn shape(&self) -> (usize, usize) {
        self.depth.shape()
    }
}

fn check_camera_above_ground(scene: &Scene, camera: &Camera) -> Result<()> {
    camera.intrinsics.validate()?;
    if !(scene.ground_plane.signed_distance(camera.pose.translation()) > 0.0) {
        return Err(Error::invalid("camera", "camera must be above the ground plane"));
    }
    Ok(())
}

/// Renders nearest-surface depth and ground segmentation with obstacles at `frame_index`.
pub fn render_frame(scene: &Scene, camera: &Camera, frame_index: i64) -> Result<FrameRender> {
    check_camera_above_ground(scene, camera)?;
    let moved = scene.at_frame(frame_index);
    let (h, w) = camera.shape();
    let mut depth = DepthMap::filled(h, w, 0.0);
    let mut seg = BinaryMask::filled(h, w, false);
    for (row, col) in camera.pixels() {
        let (origin, dir, z_per_t) = camera.ray(row, col);
        if let Some(hit) = cast_world_ray(&origin, &dir, &moved).first() {
            depth.set(row, col, hit.t * z_per_t);
            seg.set(row, col, hit.kind == SurfaceKind::Ground);
        }
    }
    Ok(FrameRender {
        depth,
        seg,
        camera: *camera,
        frame_index,
    })
}

/// Ground truth hidden-inclusive ground mask `S*` and depth `D*`.
pub fn ground_truth_hidden(scene: &Scene, camera: &Camera, frame_index: i64) -> Result<(BinaryMask, DepthMap)> {
    check_camera_above_ground(scene, camera)?;
    let moved = scene.at_frame(frame_index);
    let (h, w) = camera.shape();
    let mut s_star = BinaryMask::filled(h, w, false);
    let mut d_star = DepthMap::filled(h, w, 0.0);
    for (row, col) in camera.pixels() {
        let (origin, dir, z_per_t) = camera.ray(row, col);
        if let Some(t) = moved.ground_hit(&origin, &dir) {
            let p = origin + dir * t;
            if moved.is_traversable(p.x, p.z) {
                s_star.set(row, col, true);
                d_star.set(row, col, t * z_per_t);
            }
        }
    }
    Ok((s_star, d_star))
}

/// Flow raster plus the mask of pixels where it is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub flow: FlowField,
    pub valid: BinaryMask,
}

/// Exact optical flow from frame `frame_t` (seen by `camera_t`) to the next
/// frame (seen by `camera_t1`), moving obstacle points with their velocity.
pub fn ground_truth_flow(scene: &Scene, camera_t: &Camera, camera_t1: &Camera, frame_t: i64) -> Result<Flow> {
    check_camera_above_ground(scene, camera_t)?;
    let moved = scene.at_frame(frame_t);
    let (h, w) = camera_t.shape();
    let world_to_t1 = camera_t1.pose.inverse();
    let mut flow = FlowField::filled(h, w, [0.0, 0.0]);
    let mut valid = BinaryMask::filled(h, w, false);
    for (row, col) in camera_t.pixels() {
        let (origin, dir, _) = camera_t.ray(row, col);
        let Some(hit) = cast_world_ray(&origin, &dir, &moved).first().copied() else {
            continue;
        };
        let mut point = origin + dir * hit.t;
        if hit.kind == SurfaceKind::Obstacle {
            point += moved.obstacles[hit.surface_id - 1].velocity;
        }
        if let Some((pixel, _)) = project(&world_to_t1.transform_point(&point), &camera_t1.intrinsics) {
            flow.set(row, col, [pixel.x - col as f64, pixel.y - row as f64]);
            valid.set(row, col, true);
        }
    }
    Ok(Flow { flow, valid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    FullImage,
    TrueGround,
    HullOfVisibleGround,
}

/// Evaluation region for a frame.
pub fn eval_region(scene: &Scene, camera: &Camera, frame_index: i64, mode: RegionMode) -> Result<BinaryMask> {
    let (h, w) = camera.shape();
    match mode {
        RegionMode::FullImage => Ok(BinaryMask::filled(h, w, true)),
        RegionMode::TrueGround => {
            check_camera_above_ground(scene, camera)?;
            Ok(Raster::from_fn(h, w, |row, col| {
                let (origin, dir, _) = camera.ray(row, col);
                scene.ground_hit(&origin, &dir).is_some()
            }))
        }
        RegionMode::HullOfVisibleGround => {
            let render = render_frame(scene, camera, frame_index)?;
            Ok(convex_hull_fill(&render.seg))
        }
    }
}

/// Parameters of the random scene and camera-path generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub ground_extent: GroundExtent,
    pub min_boxes: usize,
    pub max_boxes: usize,
    pub min_box_size: f64,
    pub max_box_size: f64,
    /// Obstacles keep this distance (meters) from every camera position.
    pub clearance: f64,
    pub camera_height: f64,
    pub pitch_deg: f64,
    /// Forward motion per frame, meters.
    pub step: f64,
    /// Amplitude of the sideways sway of the camera path, meters.
    pub sway: f64,
    /// Probability that a box moves; moving boxes slide along x.
    pub moving_probability: f64,
    /// Speed of moving boxes, meters per frame.
    pub box_speed: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            focal: 120.0,
            ground_extent: GroundExtent {
                x_min: -8.0,
                x_max: 8.0,
                z_min: -2.0,
                z_max: 20.0,
            },
            min_boxes: 1,
            max_boxes: 6,
            min_box_size: 0.2,
            max_box_size: 2.0,
            clearance: 1.0,
            camera_height: 1.5,
            pitch_deg: 20.0,
            step: 0.25,
            sway: 0.4,
            moving_probability: 0.0,
            box_speed: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::centered(self.focal, self.width, self.height)
    }

    /// Camera for frame `i` of the standard forward path with a sideways sway.
    pub fn camera_at(&self, i: usize) -> Result<Camera> {
        let phase = i as f64 * 0.35;
        let eye = Vector3::new(self.sway * phase.sin(), self.camera_height, i as f64 * self.step);
        let yaw = 0.15 * phase.cos();
        let look = Vector3::new(yaw.sin(), -self.pitch_deg.to_radians().tan(), yaw.cos());
        let pose = Pose::look_at(eye, eye + look, Vector3::y())?;
        Ok(Camera::new(self.intrinsics()?, pose))
    }

    pub fn camera_path(&self, frames: usize) -> Result<Vec<Camera>> {
        (0..frames).map(|i| self.camera_at(i)).collect()
    }
}

/// Draws a random scene whose obstacles stay `cfg.clearance` away from `keep_clear`
/// (typically the camera positions) over `frames` frames of motion.
pub fn random_scene<R: Rng>(rng: &mut R, cfg: &SynthConfig, keep_clear: &[Vector3<f64>], frames: usize) -> Result<Scene> {
    let e = cfg.ground_extent;
    let count = rng.gen_range(cfg.min_boxes..=cfg.max_boxes);
    let mut obstacles = Vec::with_capacity(count);
    let mut attempts = 0;
    while obstacles.len() < count && attempts < 1000 {
        attempts += 1;
        let size = Vector3::new(
            rng.gen_range(cfg.min_box_size..=cfg.max_box_size),
            rng.gen_range(cfg.min_box_size..=cfg.max_box_size),
            rng.gen_range(cfg.min_box_size..=cfg.max_box_size),
        );
        let half = size / 2.0;
        if e.x_max - e.x_min <= size.x || e.z_max - e.z_min <= size.z {
            continue;
        }
        let x = rng.gen_range(e.x_min + half.x..e.x_max - half.x);
        let z = rng.gen_range(e.z_min + half.z..e.z_max - half.z);
        let mut obstacle = Obstacle::resting(x, z, size);
        if cfg.moving_probability > 0.0 && rng.gen_bool(cfg.moving_probability.min(1.0)) {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            obstacle = obstacle.with_velocity(Vector3::new(sign * cfg.box_speed, 0.0, 0.0));
        }
        if placement_ok(&obstacle, cfg, keep_clear, frames) {
            obstacles.push(obstacle);
        }
    }
    Scene::new(e, obstacles)
}

fn placement_ok(obstacle: &Obstacle, cfg: &SynthConfig, keep_clear: &[Vector3<f64>], frames: usize) -> bool {
    let e = cfg.ground_extent;
    (0..frames.max(1) as i64).all(|f| {
        let o = obstacle.at_frame(f);
        let inside = o.center.x - o.half_extents.x >= e.x_min
            && o.center.x + o.half_extents.x <= e.x_max
            && o.center.z - o.half_extents.z >= e.z_min
            && o.center.z + o.half_extents.z <= e.z_max;
        inside
            && keep_clear.iter().all(|p| {
                let dx = ((p.x - o.center.x).abs() - o.half_extents.x).max(0.0);
                let dz = ((p.z - o.center.z).abs() - o.half_extents.z).max(0.0);
                dx.hypot(dz) >= cfg.clearance
            })
    })
}

/// A random scene observed along the standard camera path.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub scene: Scene,
    pub cameras: Vec<Camera>,
    pub renders: Vec<FrameRender>,
}

impl Sequence {
    /// Frames `first..first + count` clipped to the sequence.
    pub fn window(&self, first: usize, count: usize) -> &[FrameRender] {
        let end = (first + count).min(self.renders.len());
        &self.renders[first.min(end)..end]
    }

    pub fn ground_truth(&self, frame: usize) -> Result<(BinaryMask, DepthMap)> {
        ground_truth_hidden(&self.scene, &self.cameras[frame], frame as i64)
    }

    /// Exact flow from `frame` to `frame + 1`.
    pub fn flow(&self, frame: usize) -> Result<Flow> {
        ground_truth_flow(&self.scene, &self.cameras[frame], &self.cameras[frame + 1], frame as i64)
    }
}

/// Draws a scene from `seed` and renders `frames` frames along the camera path.
pub fn synthesize_sequence(cfg: &SynthConfig, frames: usize, seed: u64) -> Result<Sequence> {
    use rand::SeedableRng;
    let cameras = cfg.camera_path(frames)?;
    let keep_clear: Vec<Vector3<f64>> = cameras.iter().map(|c| *c.pose.translation()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scene = random_scene(&mut rng, cfg, &keep_clear, frames)?;
    let renders = cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| render_frame(&scene, cam, i as i64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence { scene, cameras, renders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cast_ray;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn extent() -> GroundExtent {
        GroundExtent {
            x_min: -10.0,
            x_max: 10.0,
            z_min: -10.0,
            z_max: 30.0,
        }
    }

    fn level_camera(k: Intrinsics) -> Camera {
        let eye = Vector3::new(0.0, 1.5, 0.0);
        Camera::new(k, Pose::look_at(eye, eye + Vector3::z(), Vector3::y()).unwrap())
    }

    #[test]
    fn downward_ray_hits_ground_at_analytic_t() {
        // direction (0, -0.5, 1) per unit z: from y = 1.5 it meets y = 0 at z = 3.
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        let cam = level_camera(k);
        let scene = Scene::new(extent(), vec![]).unwrap();
        let hits = cast_ray(Point2::new(50.0, 100.0), &k, &cam.pose, &scene);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].kind, SurfaceKind::Ground);
        assert_relative_eq!(hits[0].t, 3.0 * 1.25f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn horizontal_ray_hits_nothing() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        let cam = level_camera(k);
        let scene = Scene::new(extent(), vec![]).unwrap();
        assert!(cast_ray(Point2::new(50.0, 50.0), &k, &cam.pose, &scene).is_empty());
    }

    #[test]
    fn box_hit_precedes_ground_hit() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        let cam = level_camera(k);
        let scene = Scene::new(extent(), vec![Obstacle::resting(0.0, 5.0, Vector3::new(1.0, 1.0, 1.0))]).unwrap();
        // pixel looking down 0.25 per unit z: meets the box front face (z = 4.5) at y = 0.375
        let hits = cast_ray(Point2::new(50.0, 75.0), &k, &cam.pose, &scene);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].kind, SurfaceKind::Obstacle);
        assert_eq!(hits[1].kind, SurfaceKind::Ground);
        let scale = (1.0f64 + 0.0625).sqrt();
        assert_relative_eq!(hits[0].t, 4.5 * scale, epsilon = 1e-12);
        assert_relative_eq!(hits[1].t, 6.0 * scale, epsilon = 1e-12);
    }

    #[test]
    fn render_empty_scene_matches_per_pixel_plane_check() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(0).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![]).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        let to_world = cam.pose;
        for (row, col, &s) in r.seg.indexed() {
            let ray = to_world.transform_vector(&cam.intrinsics.ray_direction(Point2::new(col as f64, row as f64)));
            let o = to_world.translation();
            let expect = if ray.y < 0.0 {
                let t = -o.y / ray.y;
                let p = o + ray * t;
                cfg.ground_extent.contains(p.x, p.z)
            } else {
                false
            };
            assert_eq!(s, expect, "pixel ({row}, {col})");
            assert_eq!(*r.depth.get(row, col) > 0.0, expect);
        }
        // the horizon is in view, so the top rows miss everything
        assert!(!*r.seg.get(0, 0) && *r.depth.get(0, 0) == 0.0);
    }

    #[test]
    fn box_pixels_are_nearer_than_ground_behind() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(0).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![Obstacle::resting(0.0, 5.0, Vector3::new(1.0, 0.8, 1.0))]).unwrap();
        let empty = Scene::new(cfg.ground_extent, vec![]).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        let bare = render_frame(&empty, &cam, 0).unwrap();
        let mut box_pixels = 0;
        for (row, col, &s) in r.seg.indexed() {
            let d = *r.depth.get(row, col);
            if !s && d > 0.0 {
                box_pixels += 1;
                let ground = *bare.depth.get(row, col);
                assert!(ground == 0.0 || d < ground);
            }
        }
        assert!(box_pixels > 100);
    }

    #[test]
    fn hidden_ground_excludes_footprint_only() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(0).unwrap();
        let b = Obstacle::resting(0.0, 5.0, Vector3::new(1.0, 0.8, 1.0));
        let scene = Scene::new(cfg.ground_extent, vec![b]).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        let (s_star, d_star) = ground_truth_hidden(&scene, &cam, 0).unwrap();
        let mut occluded_walkable = 0;
        for (row, col, &ss) in s_star.indexed() {
            let (o, dir, _) = cam.ray(row, col);
            let floor = scene.ground_hit(&o, &dir).map(|t| o + dir * t);
            let expect = floor.is_some_and(|p| !b.footprint_contains(p.x, p.z));
            assert_eq!(ss, expect);
            if *r.seg.get(row, col) {
                assert!(ss);
                assert_eq!(*d_star.get(row, col), *r.depth.get(row, col));
            }
            if ss && !*r.seg.get(row, col) {
                occluded_walkable += 1;
            }
            if !ss {
                assert_eq!(*d_star.get(row, col), 0.0);
            }
        }
        assert!(occluded_walkable > 0);
    }

    #[test]
    fn empty_scene_hidden_equals_visible() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(3).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![]).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        let (s_star, d_star) = ground_truth_hidden(&scene, &cam, 0).unwrap();
        assert_eq!(s_star, r.seg);
        assert_eq!(d_star, r.depth);
        assert_eq!(eval_region(&scene, &cam, 0, RegionMode::TrueGround).unwrap(), s_star);
    }

    #[test]
    fn static_identical_cameras_have_zero_flow() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(0).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![Obstacle::resting(1.0, 6.0, Vector3::new(1.0, 1.0, 1.0))]).unwrap();
        let f = ground_truth_flow(&scene, &cam, &cam, 0).unwrap();
        for (row, col, &v) in f.valid.indexed() {
            if v {
                let [du, dv] = *f.flow.get(row, col);
                assert!(du.abs() < 1e-9 && dv.abs() < 1e-9);
            }
        }
        assert!(f.valid.count() > 0);
    }

    #[test]
    fn moving_box_flow_matches_projection_derivative() {
        let k = Intrinsics::centered(200.0, 200, 150).unwrap();
        let cam = level_camera(k);
        let v = 0.05;
        let b = Obstacle::resting(0.0, 6.0, Vector3::new(1.0, 1.0, 1.0)).with_velocity(Vector3::new(v, 0.0, 0.0));
        let scene = Scene::new(extent(), vec![b]).unwrap();
        let f = ground_truth_flow(&scene, &cam, &cam, 0).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        let mut checked = 0;
        for (row, col, &s) in r.seg.indexed() {
            let z = *r.depth.get(row, col);
            if !s && z > 0.0 {
                // world +x is image -x for this camera
                let [du, dv] = *f.flow.get(row, col);
                assert_relative_eq!(du, -k.fx * v / z, epsilon = 1e-9);
                assert!(dv.abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn region_modes() {
        let cfg = SynthConfig {
            width: 4,
            height: 4,
            focal: 3.0,
            ..SynthConfig::default()
        };
        let cam = cfg.camera_at(0).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![]).unwrap();
        assert_eq!(eval_region(&scene, &cam, 0, RegionMode::FullImage).unwrap().count(), 16);

        let cfg = SynthConfig::default();
        let cam = cfg.camera_at(0).unwrap();
        let scene = Scene::new(cfg.ground_extent, vec![Obstacle::resting(0.5, 4.0, Vector3::new(1.5, 1.0, 1.0))]).unwrap();
        let hull = eval_region(&scene, &cam, 0, RegionMode::HullOfVisibleGround).unwrap();
        let r = render_frame(&scene, &cam, 0).unwrap();
        assert!(r.seg.is_subset_of(&hull));
    }

    #[test]
    fn random_scenes_are_valid_and_deterministic() {
        let cfg = SynthConfig::default();
        let path: Vec<_> = cfg.camera_path(10).unwrap().iter().map(|c| *c.pose.translation()).collect();
        for seed in 0..20 {
            let a = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, &path, 10).unwrap();
            let b = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, &path, 10).unwrap();
            assert_eq!(a, b);
            assert!((1..=6).contains(&a.obstacles.len()));
            a.validate().unwrap();
        }
    }

    #[test]
    fn rejects_camera_below_ground() {
        let k = Intrinsics::centered(10.0, 8, 8).unwrap();
        let cam = Camera::new(k, Pose::translation_only(Vector3::new(0.0, -1.0, 0.0)));
        let scene = Scene::new(extent(), vec![]).unwrap();
        assert!(render_frame(&scene, &cam, 0).is_err());
    }
}

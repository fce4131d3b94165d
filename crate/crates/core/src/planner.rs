//! A* over a hidden-traversability map, with failure and collision metrics
//! against ground truth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, BinaryMask, ProbMap, Raster};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-3;

/// `(row, col)`.
pub type Pixel = (usize, usize);

/// Per-pixel cost of entering a pixel: `1 - s* + eps_floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    values: Raster<f64>,
    eps_floor: f64,
}

impl CostMap {
    pub fn from_s_star(s_star: &ProbMap, eps_floor: f64) -> Result<Self> {
        if !(eps_floor > 0.0) {
            return Err(Error::invalid("cost map", "eps_floor must be positive"));
        }
        s_star.validate_prob("S*")?;
        Ok(Self {
            values: s_star.map(|&s| (1.0 - s) + eps_floor),
            eps_floor,
        })
    }

    /// Wraps raw costs; every value must be at least `eps_floor`.
    pub fn from_costs(values: Raster<f64>, eps_floor: f64) -> Result<Self> {
        if !(eps_floor > 0.0) {
            return Err(Error::invalid("cost map", "eps_floor must be positive"));
        }
        if let Some((row, col, &value)) = values.indexed().find(|(_, _, &v)| !(v >= eps_floor && v.is_finite())) {
            return Err(Error::OutOfRange {
                what: "cost map",
                row,
                col,
                value,
            });
        }
        Ok(Self { values, eps_floor })
    }

    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Cost of moving from `from` into the 8-neighbour `to`.
    #[inline]
    pub fn step_cost(&self, from: Pixel, to: Pixel) -> f64 {
        let c = *self.values.get(to.0, to.1);
        if from.0 != to.0 && from.1 != to.1 {
            c * std::f64::consts::SQRT_2
        } else {
            c
        }
    }

    /// `eps_floor` times the octile distance.
    #[inline]
    pub fn heuristic(&self, from: Pixel, to: Pixel) -> f64 {
        let dr = from.0.abs_diff(to.0) as f64;
        let dc = from.1.abs_diff(to.1) as f64;
        let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
        self.eps_floor * (hi + (std::f64::consts::SQRT_2 - 1.0) * lo)
    }

    /// In-bounds 8-neighbours in row-major order.
    pub fn neighbors(&self, p: Pixel) -> impl Iterator<Item = Pixel> + '_ {
        let (h, w) = self.shape();
        (-1i64..=1)
            .flat_map(|dr| (-1i64..=1).map(move |dc| (dr, dc)))
            .filter(|&d| d != (0, 0))
            .filter_map(move |(dr, dc)| {
                let r = p.0 as i64 + dr;
                let c = p.1 as i64 + dc;
                (r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w).then_some((r as usize, c as usize))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub path: Vec<Pixel>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub path: Vec<Pixel>,
    pub total_cost: f64,
    pub failed: bool,
    pub collision_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    g: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (f, h, row-major index)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_endpoint(shape: (usize, usize), p: Pixel) -> Result<()> {
    if p.0 >= shape.0 || p.1 >= shape.1 {
        return Err(Error::OutOfBounds {
            row: p.0,
            col: p.1,
            height: shape.0,
            width: shape.1,
        });
    }
    Ok(())
}

/// 8-connected A* from `start` to `goal`. The start pixel's own cost is not counted.
pub fn astar(costs: &CostMap, start: Pixel, goal: Pixel) -> Result<Option<PlannedPath>> {
    astar_traced(costs, start, goal, |_, _| {})
}

/// A* that reports each expanded pixel and its cost-so-far to `on_expand`.
pub fn astar_traced(
    costs: &CostMap,
    start: Pixel,
    goal: Pixel,
    mut on_expand: impl FnMut(Pixel, f64),
) -> Result<Option<PlannedPath>> {
    let shape = costs.shape();
    check_endpoint(shape, start)?;
    check_endpoint(shape, goal)?;
    if start == goal {
        return Err(Error::invalid("plan", "start and goal coincide"));
    }
    let w = shape.1;
    let idx = |p: Pixel| p.0 * w + p.1;
    let mut g = vec![f64::INFINITY; shape.0 * shape.1];
    let mut parent = vec![usize::MAX; shape.0 * shape.1];
    let mut heap = BinaryHeap::new();
    g[idx(start)] = 0.0;
    let h0 = costs.heuristic(start, goal);
    heap.push(Entry {
        f: h0,
        h: h0,
        g: 0.0,
        index: idx(start),
    });

    while let Some(Entry { g: queued_g, index, .. }) = heap.pop() {
        let current = (index / w, index % w);
        // stale queue entry
        if queued_g > g[index] {
            continue;
        }
        on_expand(current, g[index]);
        if current == goal {
            let mut path = vec![goal];
            let mut at = index;
            while at != idx(start) {
                at = parent[at];
                path.push((at / w, at % w));
            }
            path.reverse();
            return Ok(Some(PlannedPath {
                path,
                total_cost: g[index],
            }));
        }
        for next in costs.neighbors(current) {
            let ni = idx(next);
            let candidate = g[index] + costs.step_cost(current, next);
            if candidate < g[ni] {
                g[ni] = candidate;
                parent[ni] = index;
                let h = costs.heuristic(next, goal);
                heap.push(Entry {
                    f: candidate + h,
                    h,
                    g: candidate,
                    index: ni,
                });
            }
        }
    }
    Ok(None)
}

/// Plans over a predicted `S*` map using cost `1 - s* + eps_floor`.
pub fn plan_path(s_star: &ProbMap, start: Pixel, goal: Pixel, eps_floor: f64) -> Result<Option<PlannedPath>> {
    astar(&CostMap::from_s_star(s_star, eps_floor)?, start, goal)
}

/// `(failed, collision_fraction)`: the share of path pixels outside ground-truth walkable space.
pub fn path_metrics(path: &[Pixel], gt_s_star: &BinaryMask) -> Result<(bool, f64)> {
    if path.is_empty() {
        return Err(Error::invalid("path", "empty path"));
    }
    let mut collisions = 0usize;
    for &p in path {
        check_endpoint(gt_s_star.shape(), p)?;
        if !*gt_s_star.get(p.0, p.1) {
            collisions += 1;
        }
    }
    let fraction = collisions as f64 / path.len() as f64;
    Ok((collisions > 0, fraction))
}

pub fn evaluate_path(planned: PlannedPath, gt_s_star: &BinaryMask) -> Result<PathResult> {
    let (failed, collision_fraction) = path_metrics(&planned.path, gt_s_star)?;
    Ok(PathResult {
        path: planned.path,
        total_cost: planned.total_cost,
        failed,
        collision_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeSkip {
    NoVisibleGround,
    NoHiddenGround,
}

impl std::fmt::Display for EpisodeSkip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpisodeSkip::NoVisibleGround => write!(f, "no visible ground to start from"),
            EpisodeSkip::NoHiddenGround => write!(f, "no hidden ground to aim for"),
        }
    }
}

/// Start uniformly on visible ground, goal uniformly on hidden ground (`S* ∧ ¬S`).
pub fn sample_episode(
    visible: &BinaryMask,
    gt_s_star: &BinaryMask,
    seed: u64,
) -> Result<std::result::Result<(Pixel, Pixel), EpisodeSkip>> {
    ensure_same_shape(visible.shape(), gt_s_star.shape())?;
    let starts: Vec<Pixel> = visible.indexed().filter(|p| *p.2).map(|(r, c, _)| (r, c)).collect();
    let goals: Vec<Pixel> = gt_s_star
        .indexed()
        .filter(|&(r, c, &s)| s && !*visible.get(r, c))
        .map(|(r, c, _)| (r, c))
        .collect();
    if starts.is_empty() {
        return Ok(Err(EpisodeSkip::NoVisibleGround));
    }
    if goals.is_empty() {
        return Ok(Err(EpisodeSkip::NoHiddenGround));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = starts[rng.gen_range(0..starts.len())];
    let goal = goals[rng.gen_range(0..goals.len())];
    Ok(Ok((start, goal)))
}

/// Pixels 8-connected to `from` through set pixels of `mask`.
pub fn reachable(mask: &BinaryMask, from: Pixel) -> BinaryMask {
    let (h, w) = mask.shape();
    let mut seen = BinaryMask::filled(h, w, false);
    if !*mask.get(from.0, from.1) {
        return seen;
    }
    let dummy = CostMap {
        values: Raster::filled(h, w, 1.0),
        eps_floor: 1.0,
    };
    let mut stack = vec![from];
    seen.set(from.0, from.1, true);
    while let Some(p) = stack.pop() {
        for n in dummy.neighbors(p) {
            if *mask.get(n.0, n.1) && !*seen.get(n.0, n.1) {
                seen.set(n.0, n.1, true);
                stack.push(n);
            }
        }
    }
    seen
}

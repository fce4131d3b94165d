//! The four per-pixel training losses, each with its analytic gradient with
//! respect to the prediction. Losses are summed over pixels, not averaged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgen::TrainingTarget;
use crate::raster::{ensure_same_shape, BinaryMask, DepthMap, FootprintFrame, ProbMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the "untraversable" prior on unknown pixels.
    pub lambda: f64,
    /// Probabilities are clamped to `[clamp_eps, 1 - clamp_eps]` before taking logs.
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            clamp_eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("loss config", "lambda must be in [0, 1]"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::invalid("loss config", "clamp_eps must be in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Per-pixel loss and gradient for one output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelLoss {
    pub loss: Raster<f64>,
    pub grad: Raster<f64>,
    pub sum: f64,
}

impl PixelLoss {
    fn from_pairs(height: usize, width: usize, pairs: Vec<(f64, f64)>) -> Self {
        let sum = pairs.iter().map(|p| p.0).sum();
        let (loss, grad): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Self {
            loss: Raster::from_vec(height, width, loss).expect("length matches shape"),
            grad: Raster::from_vec(height, width, grad).expect("length matches shape"),
            sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub s_star: PixelLoss,
    pub s: PixelLoss,
    pub d: PixelLoss,
    pub d_star: PixelLoss,
    pub total: f64,
}

/// Clamped probability and d(clamped)/d(raw).
#[inline]
fn clamp_prob(p: f64, eps: f64) -> (f64, f64) {
    if p < eps {
        (eps, 0.0)
    } else if p > 1.0 - eps {
        (1.0 - eps, 0.0)
    } else {
        (p, 1.0)
    }
}

/// `-w·ln(p)` and its derivative.
#[inline]
fn neg_log(p: f64, eps: f64, w: f64) -> (f64, f64) {
    if w == 0.0 {
        return (0.0, 0.0);
    }
    let (q, dq) = clamp_prob(p, eps);
    (-w * q.ln(), -w / q * dq)
}

/// `-w·ln(1 - p)` and its derivative.
#[inline]
fn neg_log_complement(p: f64, eps: f64, w: f64) -> (f64, f64) {
    if w == 0.0 {
        return (0.0, 0.0);
    }
    let (q, dq) = clamp_prob(p, eps);
    (-w * (1.0 - q).ln(), w / (1.0 - q) * dq)
}

/// `ln(|pred - target| + 1)` and its derivative in `pred`, taking 0 at the kink.
#[inline]
fn log_l1(pred: f64, target: f64) -> (f64, f64) {
    let e = pred - target;
    let a = e.abs();
    let grad = if e == 0.0 { 0.0 } else { e.signum() / (a + 1.0) };
    (a.ln_1p(), grad)
}

/// Hidden traversable-surface loss: `-μ·ln ŝ*` on traversable pixels,
/// `-ln(1 - ŝ*)` on untraversable ones and `-λ·ln(1 - ŝ*)` elsewhere.
pub fn hidden_surface_loss(pred: &ProbMap, target: &TrainingTarget, cfg: &LossConfig) -> Result<PixelLoss> {
    cfg.validate()?;
    ensure_same_shape(target.shape(), pred.shape())?;
    let (h, w) = pred.shape();
    let pairs = (0..h * w)
        .map(|i| {
            let p = pred.as_slice()[i];
            if target.traversable.as_slice()[i] {
                let mu = if target.moving_mask.as_slice()[i] { 1.0 } else { 0.0 };
                neg_log(p, cfg.clamp_eps, mu)
            } else if target.untraversable.as_slice()[i] {
                neg_log_complement(p, cfg.clamp_eps, 1.0)
            } else {
                neg_log_complement(p, cfg.clamp_eps, cfg.lambda)
            }
        })
        .collect();
    Ok(PixelLoss::from_pairs(h, w, pairs))
}

/// Binary cross-entropy of the visible ground prediction.
pub fn visible_surface_loss(pred: &ProbMap, target: &BinaryMask, clamp_eps: f64) -> Result<PixelLoss> {
    ensure_same_shape(target.shape(), pred.shape())?;
    let (h, w) = pred.shape();
    let pairs = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &s)| {
            if s {
                neg_log(p, clamp_eps, 1.0)
            } else {
                neg_log_complement(p, clamp_eps, 1.0)
            }
        })
        .collect();
    Ok(PixelLoss::from_pairs(h, w, pairs))
}

fn masked_log_l1(pred: &DepthMap, target: &DepthMap, mask: &BinaryMask) -> Result<PixelLoss> {
    ensure_same_shape(target.shape(), pred.shape())?;
    ensure_same_shape(target.shape(), mask.shape())?;
    let (h, w) = pred.shape();
    let pairs = pred
        .iter()
        .zip(target.iter())
        .zip(mask.iter())
        .map(|((&p, &t), &m)| if m && t > 0.0 { log_l1(p, t) } else { (0.0, 0.0) })
        .collect();
    Ok(PixelLoss::from_pairs(h, w, pairs))
}

/// Log-L1 on pixels where `valid` holds and the target depth is positive.
pub fn visible_depth_loss(pred: &DepthMap, target: &DepthMap, valid: &BinaryMask) -> Result<PixelLoss> {
    masked_log_l1(pred, target, valid)
}

/// Log-L1 restricted to traversable pixels with a hidden-depth label.
pub fn hidden_depth_loss(pred: &DepthMap, target: &DepthMap, traversable: &BinaryMask) -> Result<PixelLoss> {
    masked_log_l1(pred, target, traversable)
}

pub fn total_loss(pred: &FootprintFrame, target: &TrainingTarget, cfg: &LossConfig) -> Result<LossBreakdown> {
    ensure_same_shape(target.shape(), pred.shape())?;
    let s_star = hidden_surface_loss(&pred.s_star, target, cfg)?;
    let s = visible_surface_loss(&pred.s, &target.visible_s, cfg.clamp_eps)?;
    let d = visible_depth_loss(&pred.d, &target.visible_d, &target.visible_d.support())?;
    let d_star = hidden_depth_loss(&pred.d_star, &target.hidden_depth, &target.traversable)?;
    let total = s_star.sum + s.sum + d.sum + d_star.sum;
    Ok(LossBreakdown {
        s_star,
        s,
        d,
        d_star,
        total,
    })
}

/// Outcome of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub step: f64,
    pub max_rel_error_s_star: f64,
    pub max_rel_error_s: f64,
    pub max_rel_error_d: f64,
    pub max_rel_error_d_star: f64,
    pub pixels_checked: usize,
    pub pixels_skipped_near_kink: usize,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_s_star
            .max(self.max_rel_error_s)
            .max(self.max_rel_error_d)
            .max(self.max_rel_error_d_star)
    }
}

/// Active depth pixels with `|d - d̂|` below this are excluded from the gradient check.
pub const KINK_EXCLUSION: f64 = 1e-4;

/// Random labelled instances of a small image, for gradient checking.
pub fn random_instance<R: Rng>(rng: &mut R, height: usize, width: usize) -> (FootprintFrame, TrainingTarget) {
    let n = height * width;
    let mut traversable = Vec::with_capacity(n);
    let mut untraversable = Vec::with_capacity(n);
    for _ in 0..n {
        match rng.gen_range(0..3) {
            0 => {
                traversable.push(true);
                untraversable.push(false);
            }
            1 => {
                traversable.push(false);
                untraversable.push(true);
            }
            _ => {
                traversable.push(false);
                untraversable.push(false);
            }
        }
    }
    let traversable = Raster::from_vec(height, width, traversable).unwrap();
    let untraversable = Raster::from_vec(height, width, untraversable).unwrap();
    let moving_mask = Raster::from_fn(height, width, |_, _| rng.gen_bool(0.8));
    let hidden_depth = Raster::from_fn(height, width, |r, c| {
        if *traversable.get(r, c) && rng.gen_bool(0.9) {
            rng.gen_range(0.5..10.0)
        } else {
            0.0
        }
    });
    let visible_d = Raster::from_fn(height, width, |_, _| if rng.gen_bool(0.85) { rng.gen_range(0.5..10.0) } else { 0.0 });
    let visible_s = Raster::from_fn(height, width, |_, _| rng.gen_bool(0.5));
    let target = TrainingTarget {
        traversable,
        untraversable,
        moving_mask,
        hidden_depth,
        visible_s,
        visible_d,
    };
    let s = Raster::from_fn(height, width, |_, _| rng.gen_range(0.02..0.98));
    let d = Raster::from_fn(height, width, |_, _| rng.gen_range(0.3..12.0));
    let s_star: ProbMap = Raster::from_fn(height, width, |_, _| rng.gen_range(0.02..0.98));
    let d_star = s_star.map(|&p| if p >= FootprintFrame::BINARIZE_AT { rng.gen_range(0.3..12.0) } else { 0.0 });
    let pred = FootprintFrame::new(s, d, s_star, d_star).expect("generated prediction is valid");
    (pred, target)
}

/// Compares every analytic per-pixel gradient with a central difference of the
/// corresponding loss value.
pub fn gradcheck(trials: usize, seed: u64, cfg: &LossConfig) -> Result<GradcheckReport> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport {
        trials,
        step: H,
        max_rel_error_s_star: 0.0,
        max_rel_error_s: 0.0,
        max_rel_error_d: 0.0,
        max_rel_error_d_star: 0.0,
        pixels_checked: 0,
        pixels_skipped_near_kink: 0,
    };
    for _ in 0..trials {
        let (pred, target) = random_instance(&mut rng, 6, 7);
        let base = total_loss(&pred, &target, cfg)?;
        let (h, w) = pred.shape();
        let d_valid = target.visible_d.support();
        for r in 0..h {
            for c in 0..w {
                report.pixels_checked += 1;

                let fd = central_difference(&pred.s_star, r, c, H, |p| Ok(hidden_surface_loss(p, &target, cfg)?.sum))?;
                update(&mut report.max_rel_error_s_star, *base.s_star.grad.get(r, c), fd);

                let fd = central_difference(&pred.s, r, c, H, |p| Ok(visible_surface_loss(p, &target.visible_s, cfg.clamp_eps)?.sum))?;
                update(&mut report.max_rel_error_s, *base.s.grad.get(r, c), fd);

                if near_kink(*pred.d.get(r, c), *target.visible_d.get(r, c), *d_valid.get(r, c)) {
                    report.pixels_skipped_near_kink += 1;
                } else {
                    let fd = central_difference(&pred.d, r, c, H, |p| Ok(visible_depth_loss(p, &target.visible_d, &d_valid)?.sum))?;
                    update(&mut report.max_rel_error_d, *base.d.grad.get(r, c), fd);
                }

                if near_kink(*pred.d_star.get(r, c), *target.hidden_depth.get(r, c), *target.traversable.get(r, c)) {
                    report.pixels_skipped_near_kink += 1;
                } else {
                    let fd = central_difference(&pred.d_star, r, c, H, |p| {
                        Ok(hidden_depth_loss(p, &target.hidden_depth, &target.traversable)?.sum)
                    })?;
                    update(&mut report.max_rel_error_d_star, *base.d_star.grad.get(r, c), fd);
                }
            }
        }
    }
    Ok(report)
}

/// Only pixels the depth loss actually sees can sit on its kink.
fn near_kink(pred: f64, target: f64, in_mask: bool) -> bool {
    in_mask && target > 0.0 && (pred - target).abs() < KINK_EXCLUSION
}

fn central_difference(
    raster: &Raster<f64>,
    r: usize,
    c: usize,
    h: f64,
    f: impl Fn(&Raster<f64>) -> Result<f64>,
) -> Result<f64> {
    let mut probe = raster.clone();
    let x = *raster.get(r, c);
    probe.set(r, c, x + h);
    let plus = f(&probe)?;
    probe.set(r, c, x - h);
    let minus = f(&probe)?;
    Ok((plus - minus) / (2.0 * h))
}

fn update(max: &mut f64, analytic: f64, numeric: f64) {
    let scale = analytic.abs().max(numeric.abs());
    let rel = if scale < 1e-12 { 0.0 } else { (analytic - numeric).abs() / scale };
    *max = max.max(rel);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn one_pixel_target(traversable: bool, untraversable: bool, mu: bool) -> TrainingTarget {
        TrainingTarget {
            traversable: Raster::filled(1, 1, traversable),
            untraversable: Raster::filled(1, 1, untraversable),
            moving_mask: Raster::filled(1, 1, mu),
            hidden_depth: Raster::filled(1, 1, 0.0),
            visible_s: Raster::filled(1, 1, false),
            visible_d: Raster::filled(1, 1, 0.0),
        }
    }

    fn p1(v: f64) -> ProbMap {
        Raster::filled(1, 1, v)
    }

    #[test]
    fn hidden_surface_examples() {
        let cfg = LossConfig::default();
        let l = hidden_surface_loss(&p1(0.5), &one_pixel_target(true, false, true), &cfg).unwrap();
        assert_relative_eq!(l.sum, LN_2, epsilon = 1e-15);
        assert_relative_eq!(*l.grad.get(0, 0), -2.0, epsilon = 1e-15);

        let l = hidden_surface_loss(&p1(0.5), &one_pixel_target(false, false, true), &cfg).unwrap();
        assert_relative_eq!(l.sum, 0.25 * LN_2, epsilon = 1e-15);
        assert!((l.sum - 0.1733).abs() < 1e-4);

        for p in [0.01, 0.4, 0.99] {
            let l = hidden_surface_loss(&p1(p), &one_pixel_target(true, false, false), &cfg).unwrap();
            assert_eq!((l.sum, *l.grad.get(0, 0)), (0.0, 0.0));
        }

        let l = hidden_surface_loss(&p1(0.75), &one_pixel_target(false, true, true), &cfg).unwrap();
        assert_relative_eq!(l.sum, -(0.25f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn visible_surface_examples() {
        let eps = 1e-6;
        let l = visible_surface_loss(&p1(1.0 - eps), &Raster::filled(1, 1, true), eps).unwrap();
        assert_relative_eq!(l.sum, eps, epsilon = 1e-11);
        let l = visible_surface_loss(&p1(0.5), &Raster::filled(1, 1, false), eps).unwrap();
        assert_relative_eq!(l.sum, LN_2, epsilon = 1e-15);

        let target = Raster::from_fn(5, 4, |r, c| (r + c) % 2 == 0);
        let perfect = target.to_prob();
        let l = visible_surface_loss(&perfect, &target, eps).unwrap();
        assert!(l.sum <= 20.0 * eps * 1.01);
    }

    #[test]
    fn depth_loss_examples() {
        let valid = Raster::filled(1, 1, true);
        let l = visible_depth_loss(&p1(5.0), &p1(3.0), &valid).unwrap();
        assert_relative_eq!(l.sum, 3.0f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(*l.grad.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        let l = visible_depth_loss(&p1(3.0), &p1(3.0), &valid).unwrap();
        assert_eq!((l.sum, *l.grad.get(0, 0)), (0.0, 0.0));
        let l = visible_depth_loss(&p1(9.0), &p1(0.0), &valid).unwrap();
        assert_eq!(l.sum, 0.0);

        let trav = Raster::filled(1, 1, true);
        assert_eq!(hidden_depth_loss(&p1(2.0), &p1(2.0), &trav).unwrap().sum, 0.0);
        assert_eq!(hidden_depth_loss(&p1(7.0), &p1(2.0), &Raster::filled(1, 1, false)).unwrap().sum, 0.0);
        assert_relative_eq!(hidden_depth_loss(&p1(3.0), &p1(1.0), &trav).unwrap().sum, 3.0f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(*hidden_depth_loss(&p1(0.0), &p1(1.0), &trav).unwrap().grad.get(0, 0), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch_errors() {
        let cfg = LossConfig::default();
        let t = one_pixel_target(true, false, true);
        assert!(hidden_surface_loss(&Raster::filled(2, 1, 0.5), &t, &cfg).is_err());
        assert!(visible_surface_loss(&Raster::filled(2, 1, 0.5), &t.visible_s, 1e-6).is_err());
        assert!(visible_depth_loss(&Raster::filled(2, 1, 0.5), &t.visible_d, &t.visible_s).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig { lambda: 1.5, clamp_eps: 1e-6 }.validate().is_err());
        assert!(LossConfig { lambda: 0.25, clamp_eps: 0.5 }.validate().is_err());
        assert!(LossConfig { lambda: 0.25, clamp_eps: 0.0 }.validate().is_err());
    }

    #[test]
    fn clamped_region_has_zero_gradient() {
        let cfg = LossConfig::default();
        let l = hidden_surface_loss(&p1(0.0), &one_pixel_target(true, false, true), &cfg).unwrap();
        assert_relative_eq!(l.sum, -(1e-6f64).ln(), epsilon = 1e-9);
        assert_eq!(*l.grad.get(0, 0), 0.0);
    }

    #[test]
    fn small_gradcheck() {
        let report = gradcheck(5, 11, &LossConfig::default()).unwrap();
        assert!(report.max_rel_error() < 1e-4, "{report:?}");
    }
}

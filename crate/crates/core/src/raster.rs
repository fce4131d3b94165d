//! Row-major rasters with a top-left origin, and the world-model frame built from them.

use crate::error::{Error, Result};

/// A dense `height x width` grid stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Depth in meters; `0.0` means "no value".
pub type DepthMap = Raster<f64>;
/// Per-pixel probability in `[0, 1]`.
pub type ProbMap = Raster<f64>;
pub type BinaryMask = Raster<bool>;
/// Per-pixel `(du, dv)` displacement in pixels.
pub type FlowField = Raster<[f64; 2]>;

impl<T: Clone> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(
                "raster",
                format!("{} values for a {height}x{width} raster", data.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Iterates `(row, col, &value)` in row-major order.
    pub fn indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        let width = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / width, i % width, v))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Raster<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Raster<V>> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(Raster {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    /// Rounds a continuous pixel `(u, v)` to its raster cell, if inside.
    #[inline]
    pub fn cell_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let col = u.round();
        let row = v.round();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }
}

pub(crate) fn ensure_same_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

impl Raster<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| *a && *b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| *a || *b)
    }

    /// `self ∧ ¬other`
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| *a && !*b)
    }

    pub fn not(&self) -> Self {
        self.map(|b| !b)
    }

    pub fn to_prob(&self) -> ProbMap {
        self.map(|&b| if b { 1.0 } else { 0.0 })
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }
}

impl Raster<f64> {
    /// Pixels with a strictly positive value.
    pub fn support(&self) -> BinaryMask {
        self.map(|&v| v > 0.0)
    }

    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        self.map(|&v| v >= threshold)
    }

    /// Zeroes every pixel where `mask` is false.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        self.zip_map(mask, |&v, &m| if m { v } else { 0.0 })
    }

    /// Checks the depth-map invariants: finite and non-negative.
    pub fn validate_depth(&self, what: &'static str) -> Result<()> {
        self.validate_range(what, |v| v.is_finite() && v >= 0.0)
    }

    /// Checks the probability-map invariants: inside `[0, 1]`.
    pub fn validate_prob(&self, what: &'static str) -> Result<()> {
        self.validate_range(what, |v| (0.0..=1.0).contains(&v))
    }

    fn validate_range(&self, what: &'static str, ok: impl Fn(f64) -> bool) -> Result<()> {
        match self.indexed().find(|(_, _, &v)| !ok(v)) {
            Some((row, col, &value)) => Err(Error::OutOfRange {
                what,
                row,
                col,
                value,
            }),
            None => Ok(()),
        }
    }
}

/// The four-channel world model: visible ground `s`, visible depth `d`,
/// hidden-inclusive ground `s_star` and its depth `d_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintFrame {
    pub s: ProbMap,
    pub d: DepthMap,
    pub s_star: ProbMap,
    pub d_star: DepthMap,
}

impl FootprintFrame {
    /// Binarization threshold used for the `s_star = 0 => d_star = 0` invariant.
    pub const BINARIZE_AT: f64 = 0.5;

    pub fn new(s: ProbMap, d: DepthMap, s_star: ProbMap, d_star: DepthMap) -> Result<Self> {
        let shape = s.shape();
        for other in [d.shape(), s_star.shape(), d_star.shape()] {
            ensure_same_shape(shape, other)?;
        }
        s.validate_prob("S")?;
        s_star.validate_prob("S*")?;
        d.validate_depth("D")?;
        d_star.validate_depth("D*")?;
        if let Some((row, col, &value)) = d_star
            .indexed()
            .find(|&(r, c, &v)| v != 0.0 && *s_star.get(r, c) < Self::BINARIZE_AT)
        {
            return Err(Error::OutOfRange {
                what: "D* where S* is untraversable",
                row,
                col,
                value,
            });
        }
        Ok(Self { s, d, s_star, d_star })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.s.shape()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_rounding_follows_pixel_centers() {
        let r = Raster::filled(4, 6, 0u8);
        assert_eq!(r.cell_of(2.4, 1.6), Some((2, 2)));
        assert_eq!(r.cell_of(-0.4, 0.0), Some((0, 0)));
        assert_eq!(r.cell_of(-0.6, 0.0), None);
        assert_eq!(r.cell_of(5.49, 3.49), Some((3, 5)));
        assert_eq!(r.cell_of(5.5, 0.0), None);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Raster::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn frame_rejects_depth_on_untraversable_pixel() {
        let ones = ProbMap::filled(2, 2, 1.0);
        let mut s_star = ProbMap::filled(2, 2, 1.0);
        s_star.set(1, 1, 0.2);
        let d_star = DepthMap::filled(2, 2, 3.0);
        let err = FootprintFrame::new(ones.clone(), d_star.clone(), s_star, d_star).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { row: 1, col: 1, .. }));
    }

    #[test]
    fn frame_rejects_shape_and_range_errors() {
        let a = ProbMap::filled(2, 2, 0.5);
        let b = ProbMap::filled(2, 3, 0.5);
        assert!(matches!(
            FootprintFrame::new(a.clone(), a.clone(), b, DepthMap::filled(2, 2, 0.0)),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = a.clone();
        bad.set(0, 1, 1.5);
        assert!(matches!(
            FootprintFrame::new(bad, a.clone(), a.clone(), DepthMap::filled(2, 2, 0.0)),
            Err(Error::OutOfRange { .. })
        ));
    }
}

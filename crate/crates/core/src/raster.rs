//! Raster and point primitives shared by every stage of the pipeline.
//!
//! Coordinates follow image conventions: `x` is the column, `y` the row,
//! pixel centres sit on integer coordinates and the origin is top-left.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Real-valued `width x height` raster stored row-major.
///
/// Every stored value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> ScalarGrid<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::param(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite value at ({}, {})",
                i % width.max(1),
                i / width.max(1)
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(value.is_finite(), "grid fill value must be finite");
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    ///
    /// # Panics
    /// If `f` returns a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite value at ({x}, {y})");
                values.push(v);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    /// Value at `(x, y)` with coordinates clamped into the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.values[cy * self.width + cx]
    }

    /// Bilinear sample at a sub-pixel position, clamping to the border.
    pub fn sample_bilinear(&self, x: T, y: T) -> T {
        let maxx = T::from_usize_lossy(self.width - 1);
        let maxy = T::from_usize_lossy(self.height - 1);
        let x = x.max(T::zero()).min(maxx);
        let y = y.max(T::zero()).min(maxy);
        let x0 = x.floor();
        let y0 = y.floor();
        let ax = x - x0;
        let ay = y - y0;
        let x0 = x0.to_usize().unwrap_or(0);
        let y0 = y0.to_usize().unwrap_or(0);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);
        let one = T::one();
        (one - ax) * (one - ay) * v00 + ax * (one - ay) * v10 + (one - ax) * ay * v01 + ax * ay * v11
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Applies `f` to every value.
    ///
    /// # Panics
    /// If `f` produces a non-finite value.
    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    pub fn ensure_same_dims(&self, other: (usize, usize), context: &'static str) -> Result<()> {
        if self.dims() != other {
            return Err(Error::shape(context, self.dims(), other));
        }
        Ok(())
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> ScalarGrid<U> {
        ScalarGrid {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Three-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T> {
    pub channels: [ScalarGrid<T>; 3],
}

impl<T: Real> RgbImage<T> {
    pub fn new(r: ScalarGrid<T>, g: ScalarGrid<T>, b: ScalarGrid<T>) -> Result<Self> {
        r.ensure_same_dims(g.dims(), "rgb channels")?;
        r.ensure_same_dims(b.dims(), "rgb channels")?;
        Ok(Self {
            channels: [r, g, b],
        })
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    /// Rec. 601 luma.
    pub fn luminance(&self) -> ScalarGrid<T> {
        let [r, g, b] = &self.channels;
        let (kr, kg, kb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        ScalarGrid::from_fn(self.width(), self.height(), |x, y| {
            kr * r.get(x, y) + kg * g.get(x, y) + kb * b.get(x, y)
        })
    }
}

/// Binary raster. Used both for edge maps (`1` = edge) and for region masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Binary edge raster (`true` = edge pixel).
pub type EdgeMap = Mask;
/// Binary region raster (`true` = inside the region).
pub type BinaryMask = Mask;

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::param(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Mask with the listed pixels set. Out-of-bounds pixels are ignored.
    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut m = Self::new(width, height);
        for &(x, y) in pixels {
            if x < width && y < height {
                m.set(x, y, true);
            }
        }
        m
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`Mask::get`] but returns `false` outside the raster.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn ensure_same_dims(&self, other: (usize, usize), context: &'static str) -> Result<()> {
        if self.dims() != other {
            return Err(Error::shape(context, self.dims(), other));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Mask, context: &'static str, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        self.ensure_same_dims(other.dims(), context)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, "mask intersection", |a, b| a && b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, "mask difference", |a, b| a && !b)
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Chebyshev (square) dilation by `radius`.
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        // dilate(m) = !erode(!m) with out-of-bounds treated as clear
        let inv = self.invert();
        inv.erode(radius).invert()
    }

    /// Chebyshev (square) erosion by `radius`: a pixel survives iff every
    /// in-bounds pixel within distance `radius` is set.
    pub fn erode(&self, radius: usize) -> Mask {
        if radius == 0 || self.bits.is_empty() {
            return self.clone();
        }
        let (w, h) = self.dims();
        let rows = sliding_all(&self.bits, w, h, radius, true);
        let bits = sliding_all(&rows, w, h, radius, false);
        Mask {
            width: w,
            height: h,
            bits,
        }
    }

    pub fn invert(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

// One-dimensional "all set within radius" pass along rows or columns using a
// prefix count of clear pixels. Out-of-bounds neighbours are ignored.
fn sliding_all(src: &[bool], w: usize, h: usize, r: usize, along_rows: bool) -> Vec<bool> {
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let idx = |line: usize, pos: usize| if along_rows { line * w + pos } else { pos * w + line };
    let mut out = vec![false; w * h];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for pos in 0..len {
            prefix[pos + 1] = prefix[pos] + usize::from(!src[idx(line, pos)]);
        }
        for pos in 0..len {
            let lo = pos.saturating_sub(r);
            let hi = (pos + r).min(len - 1);
            out[idx(line, pos)] = prefix[hi + 1] == prefix[lo];
        }
    }
    out
}

/// Pixel-wise union of two edge maps.
pub fn mask_union(a: &EdgeMap, b: &EdgeMap) -> Result<EdgeMap> {
    a.zip_with(b, "mask union", |x, y| x || y)
}

/// Chebyshev erosion of a region mask.
pub fn erode_mask(m: &BinaryMask, radius: usize) -> BinaryMask {
    m.erode(radius)
}

/// Chebyshev dilation of an edge map or mask.
pub fn dilate_mask(m: &Mask, radius: usize) -> Mask {
    m.dilate(radius)
}

/// Region where depth is strictly nearer than the background sentinel.
pub fn foreground_mask<T: Real>(depth: &ScalarGrid<T>, background_sentinel: T) -> BinaryMask {
    Mask::from_fn(depth.width(), depth.height(), |x, y| depth.get(x, y) < background_sentinel)
}

/// Sub-pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    /// Nearest pixel (round half away from zero), or `None` outside the raster.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let rx = self.x.round();
        let ry = self.y.round();
        if rx < T::zero() || ry < T::zero() {
            return None;
        }
        let (px, py) = (rx.to_usize()?, ry.to_usize()?);
        (px < width && py < height).then_some((px, py))
    }
}

/// Ordered points with an optional chain label per point.
///
/// Operations that move or filter points keep the relative order and carry
/// chain labels along.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet<T> {
    points: Vec<Point2<T>>,
    chain_ids: Option<Vec<u32>>,
}

impl<T: Real> PointSet<T> {
    pub fn new(points: Vec<Point2<T>>) -> Self {
        Self {
            points,
            chain_ids: None,
        }
    }

    pub fn with_chains(points: Vec<Point2<T>>, chain_ids: Vec<u32>) -> Result<Self> {
        if points.len() != chain_ids.len() {
            return Err(Error::param(format!(
                "{} points but {} chain labels",
                points.len(),
                chain_ids.len()
            )));
        }
        Ok(Self {
            points,
            chain_ids: Some(chain_ids),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    pub fn chain_ids(&self) -> Option<&[u32]> {
        self.chain_ids.as_deref()
    }

    /// Same labels, new positions.
    pub(crate) fn with_points(&self, points: Vec<Point2<T>>) -> Self {
        debug_assert_eq!(points.len(), self.points.len());
        Self {
            points,
            chain_ids: self.chain_ids.clone(),
        }
    }

    /// Keeps the points for which `keep` is true, preserving order and labels.
    pub fn retain_by(&self, mut keep: impl FnMut(&Point2<T>) -> bool) -> Self {
        let mut points = Vec::new();
        let mut ids = self.chain_ids.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(p) {
                points.push(*p);
                if let (Some(out), Some(src)) = (ids.as_mut(), self.chain_ids.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        Self {
            points,
            chain_ids: ids,
        }
    }

    /// Points grouped by chain label, in order of first appearance. Without
    /// labels the whole set is one chain.
    pub fn chains(&self) -> Vec<Vec<Point2<T>>> {
        match &self.chain_ids {
            None => {
                if self.points.is_empty() {
                    Vec::new()
                } else {
                    vec![self.points.clone()]
                }
            }
            Some(ids) => {
                let mut order: Vec<u32> = Vec::new();
                let mut groups: std::collections::HashMap<u32, Vec<Point2<T>>> = Default::default();
                for (p, id) in self.points.iter().zip(ids) {
                    groups
                        .entry(*id)
                        .or_insert_with(|| {
                            order.push(*id);
                            Vec::new()
                        })
                        .push(*p);
                }
                order.into_iter().map(|id| groups.remove(&id).unwrap_or_default()).collect()
            }
        }
    }
}

/// Result of [`rasterize_points`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub map: EdgeMap,
    /// Points whose rounded position fell outside the raster.
    pub dropped: usize,
}

/// Sets the nearest pixel of every in-bounds point.
pub fn rasterize_points<T: Real>(pts: &PointSet<T>, width: usize, height: usize) -> Rasterized {
    let mut map = Mask::new(width, height);
    let mut dropped = 0;
    for p in pts.points() {
        match p.pixel(width, height) {
            Some((x, y)) => map.set(x, y, true),
            None => dropped += 1,
        }
    }
    Rasterized { map, dropped }
}

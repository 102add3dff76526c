//! Dense optical flow.
//!
//! [`estimate_flow`] is a coarse-to-fine least-squares estimator: on every
//! pyramid level the current frame is warped by the running estimate, and each
//! pixel solves the 2x2 normal equations accumulated over a square window.
//! Pixels whose structure tensor is ill-conditioned keep the estimate handed
//! down from the coarser level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Point2, ScalarGrid};
use crate::scalar::Real;

/// Per-pixel displacement in pixels/frame. `v(x, y)` maps a pixel of the
/// earlier frame to its position `(x + dx, y + dy)` in the later one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    width: usize,
    height: usize,
    vectors: Vec<[T; 2]>,
}

impl<T: Real> FlowField<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, [T::zero(), T::zero()])
    }

    pub fn uniform(width: usize, height: usize, v: [T; 2]) -> Self {
        Self {
            width,
            height,
            vectors: vec![v; width * height],
        }
    }

    pub fn new(width: usize, height: usize, vectors: Vec<[T; 2]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::param(format!(
                "flow of {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            )));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 2]) -> Self {
        let mut vectors = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                vectors.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            vectors,
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
    pub fn get(&self, x: usize, y: usize) -> [T; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn vectors(&self) -> &[[T; 2]] {
        &self.vectors
    }

    pub fn max_magnitude(&self) -> T {
        self.vectors
            .iter()
            .map(|[dx, dy]| dx.hypot(*dy))
            .fold(T::zero(), T::max)
    }

    pub fn ensure_same_dims(&self, other: (usize, usize), context: &'static str) -> Result<()> {
        if self.dims() != other {
            return Err(Error::shape(context, self.dims(), other));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FlowField<U> {
        FlowField {
            width: self.width,
            height: self.height,
            vectors: self
                .vectors
                .iter()
                .map(|[a, b]| [U::lit(a.to_f64_lossy()), U::lit(b.to_f64_lossy())])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct FlowParams<T> {
    pub pyramid_levels: usize,
    pub window_radius: usize,
    pub iterations_per_level: usize,
    /// Minimum smallest eigenvalue of the window-averaged structure tensor
    /// (intensities in `[0, 1]`, gradients per pixel).
    pub min_eigen: T,
}

impl<T: Real> Default for FlowParams<T> {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window_radius: 7,
            iterations_per_level: 3,
            min_eigen: T::lit(1e-4),
        }
    }
}

impl<T: Real> FlowParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 || self.window_radius == 0 || self.iterations_per_level == 0 {
            return Err(Error::param(
                "flow pyramid_levels, window_radius and iterations_per_level must be positive",
            ));
        }
        if !(self.min_eigen >= T::zero()) {
            return Err(Error::param(format!("min_eigen must be >= 0, got {}", self.min_eigen)));
        }
        Ok(())
    }
}

/// Bilinear lookup of `v` at a sub-pixel position, clamped to the border.
pub fn sample_flow<T: Real>(v: &FlowField<T>, p: Point2<T>) -> [T; 2] {
    let (w, h) = v.dims();
    let x = p.x.max(T::zero()).min(T::from_usize_lossy(w - 1));
    let y = p.y.max(T::zero()).min(T::from_usize_lossy(h - 1));
    let (fx, fy) = (x.floor(), y.floor());
    let (ax, ay) = (x - fx, y - fy);
    let x0 = fx.to_usize().unwrap_or(0);
    let y0 = fy.to_usize().unwrap_or(0);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let one = T::one();
    let w00 = (one - ax) * (one - ay);
    let w10 = ax * (one - ay);
    let w01 = (one - ax) * ay;
    let w11 = ax * ay;
    let (a, b, c, d) = (v.get(x0, y0), v.get(x1, y0), v.get(x0, y1), v.get(x1, y1));
    [
        w00 * a[0] + w10 * b[0] + w01 * c[0] + w11 * d[0],
        w00 * a[1] + w10 * b[1] + w01 * c[1] + w11 * d[1],
    ]
}

/// Chains `a -> b` and `b -> c` into `a -> c`.
pub fn compose_flows<T: Real>(v_ab: &FlowField<T>, v_bc: &FlowField<T>) -> Result<FlowField<T>> {
    v_ab.ensure_same_dims(v_bc.dims(), "flow composition")?;
    Ok(FlowField::from_fn(v_ab.width, v_ab.height, |x, y| {
        let [dx, dy] = v_ab.get(x, y);
        let p = Point2::new(T::from_usize_lossy(x) + dx, T::from_usize_lossy(y) + dy);
        let [ex, ey] = sample_flow(v_bc, p);
        [dx + ex, dy + ey]
    }))
}

/// Dense flow from `prev` to `curr` (luminance in `[0, 1]`).
pub fn estimate_flow<T: Real>(prev: &ScalarGrid<T>, curr: &ScalarGrid<T>, params: &FlowParams<T>) -> Result<FlowField<T>> {
    prev.ensure_same_dims(curr.dims(), "flow frames")?;
    params.validate()?;
    let (w, h) = prev.dims();
    if w == 0 || h == 0 {
        return Ok(FlowField::zeros(w, h));
    }
    let prev_pyr = pyramid(prev, params.pyramid_levels);
    let curr_pyr = pyramid(curr, params.pyramid_levels);
    let levels = prev_pyr.len();

    let (cw, ch) = prev_pyr[levels - 1].dims();
    let mut flow = FlowField::zeros(cw, ch);
    for level in (0..levels).rev() {
        let p = &prev_pyr[level];
        let c = &curr_pyr[level];
        if flow.dims() != p.dims() {
            flow = upsample_flow(&flow, p.width(), p.height());
        }
        refine_level(p, c, &mut flow, params);
    }
    Ok(flow)
}

fn refine_level<T: Real>(prev: &ScalarGrid<T>, curr: &ScalarGrid<T>, flow: &mut FlowField<T>, params: &FlowParams<T>) {
    let (w, h) = prev.dims();
    let r = params.window_radius;
    let half = T::lit(0.5);
    let mut gx = vec![T::zero(); w * h];
    let mut gy = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            gx[y * w + x] = (prev.get_clamped(xi + 1, yi) - prev.get_clamped(xi - 1, yi)) * half;
            gy[y * w + x] = (prev.get_clamped(xi, yi + 1) - prev.get_clamped(xi, yi - 1)) * half;
        }
    }
    let prod = |a: &[T], b: &[T]| a.iter().zip(b).map(|(u, v)| *u * *v).collect::<Vec<T>>();
    let sxx = box_mean(&prod(&gx, &gx), w, h, r);
    let sxy = box_mean(&prod(&gx, &gy), w, h, r);
    let syy = box_mean(&prod(&gy, &gy), w, h, r);

    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let well_posed: Vec<bool> = (0..w * h)
        .map(|i| {
            let (a, b, d) = (sxx[i], sxy[i], syy[i]);
            let tr = a + d;
            let disc = ((a - d) * (a - d) + four * b * b).sqrt();
            let lambda_min = (tr - disc) / two;
            lambda_min >= params.min_eigen && lambda_min > T::zero()
        })
        .collect();
    if !well_posed.iter().any(|b| *b) {
        return;
    }

    let mut it = vec![T::zero(); w * h];
    for _ in 0..params.iterations_per_level {
        for y in 0..h {
            for x in 0..w {
                let [dx, dy] = flow.get(x, y);
                let warped = curr.sample_bilinear(T::from_usize_lossy(x) + dx, T::from_usize_lossy(y) + dy);
                it[y * w + x] = warped - prev.get(x, y);
            }
        }
        let bx = box_mean(&prod(&gx, &it), w, h, r);
        let by = box_mean(&prod(&gy, &it), w, h, r);
        for i in 0..w * h {
            if !well_posed[i] {
                continue;
            }
            let (a, b, d) = (sxx[i], sxy[i], syy[i]);
            let det = a * d - b * b;
            let ux = -(d * bx[i] - b * by[i]) / det;
            let uy = -(a * by[i] - b * bx[i]) / det;
            let v = &mut flow.vectors[i];
            v[0] += ux;
            v[1] += uy;
        }
    }
}

// Mean over the (clipped) square window of radius `r`, separable running sums.
fn box_mean<T: Real>(src: &[T], w: usize, h: usize, r: usize) -> Vec<T> {
    let mut rows = vec![T::zero(); w * h];
    let mut prefix = vec![T::zero(); w.max(h) + 1];
    for y in 0..h {
        for x in 0..w {
            prefix[x + 1] = prefix[x] + src[y * w + x];
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = prefix[hi + 1] - prefix[lo];
        }
    }
    let mut out = vec![T::zero(); w * h];
    for x in 0..w {
        for y in 0..h {
            prefix[y + 1] = prefix[y] + rows[y * w + x];
        }
        let xl = x.saturating_sub(r);
        let xh = (x + r).min(w - 1);
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            let count = T::from_usize_lossy((xh - xl + 1) * (hi - lo + 1));
            out[y * w + x] = (prefix[hi + 1] - prefix[lo]) / count;
        }
    }
    out
}

// Level 0 is the input; each further level is blurred with the 5-tap binomial
// kernel and subsampled at even pixels. Stops early once a level would drop
// below 8 pixels on a side.
fn pyramid<T: Real>(img: &ScalarGrid<T>, levels: usize) -> Vec<ScalarGrid<T>> {
    let mut out = vec![img.clone()];
    while out.len() < levels {
        let last = out.last().expect("non-empty pyramid");
        let (w, h) = last.dims();
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        if nw < 8 || nh < 8 {
            break;
        }
        let k = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v| T::lit(v / 16.0));
        let horiz = ScalarGrid::from_fn(w, h, |x, y| {
            (0..5)
                .map(|i| k[i] * last.get_clamped(x as isize + i as isize - 2, y as isize))
                .sum()
        });
        let down = ScalarGrid::from_fn(nw, nh, |x, y| {
            (0..5)
                .map(|i| k[i] * horiz.get_clamped(2 * x as isize, 2 * y as isize + i as isize - 2))
                .sum()
        });
        out.push(down);
    }
    out
}

fn upsample_flow<T: Real>(coarse: &FlowField<T>, w: usize, h: usize) -> FlowField<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    FlowField::from_fn(w, h, |x, y| {
        let p = Point2::new(T::from_usize_lossy(x) * half, T::from_usize_lossy(y) * half);
        let [dx, dy] = sample_flow(coarse, p);
        [dx * two, dy * two]
    })
}

/// Mean Euclidean distance between two fields over the pixels where `keep`
/// holds.
pub fn mean_endpoint_error<T: Real>(
    a: &FlowField<T>,
    b: &FlowField<T>,
    mut keep: impl FnMut(usize, usize) -> bool,
) -> Result<T> {
    a.ensure_same_dims(b.dims(), "endpoint error")?;
    let mut total = T::zero();
    let mut n = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            if keep(x, y) {
                let [ax, ay] = a.get(x, y);
                let [bx, by] = b.get(x, y);
                total += (ax - bx).hypot(ay - by);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Ok(T::zero());
    }
    Ok(total / T::from_usize_lossy(n))
}

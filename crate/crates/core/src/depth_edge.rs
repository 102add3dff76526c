//! Depth edges by Gaussian adaptive thresholding.
//!
//! A pixel is an edge when its depth exceeds the Gaussian-weighted mean of its
//! `w x w` neighbourhood by more than an offset. Background pixels are first
//! filled with a value slightly nearer than the surrounding foreground, so the
//! one-sided test fires on the object side of a silhouette; the output is then
//! masked to the foreground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EdgeMap, Mask, ScalarGrid};
use crate::scalar::Real;

/// Default offset in units of the foreground depth span.
pub const DEFAULT_RELATIVE_OFFSET: f64 = 1e-3;

/// Ratio of offset to background gap. Background has to make up at least
/// this Gaussian weight fraction of a window before the foreground pixel at
/// its centre fires. With `sigma = w / 4` a straight silhouette gives a band
/// one pixel wide at `w = 7` and two pixels wide for `w` in 9..=13.
pub const OFFSET_TO_GAP: f64 = 0.23;

/// Default background gap in units of the foreground depth span.
pub const DEFAULT_RELATIVE_GAP: f64 = DEFAULT_RELATIVE_OFFSET / OFFSET_TO_GAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// `D > T + c`: deeper than the local mean.
    #[default]
    Deeper,
    /// `|D - T| > c`.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct AdaptiveThresholdParams<T> {
    /// Odd window width `w >= 3`.
    pub window: usize,
    /// Gaussian standard deviation; `None` means `w / 4`.
    pub sigma: Option<T>,
    /// Non-negative offset added to the threshold; `None` means
    /// [`DEFAULT_RELATIVE_OFFSET`] times the foreground depth span.
    pub offset: Option<T>,
    /// Input depths at or above this value are background. `None` treats the
    /// whole raster as foreground.
    pub background_marker: Option<T>,
    /// Constant assigned to every background pixel before thresholding. When
    /// `None`, each background pixel gets the Gaussian-weighted mean of the
    /// foreground depths in its window minus `background_gap`.
    pub background_sentinel: Option<T>,
    /// Positive gap for the local background fill; `None` means
    /// [`DEFAULT_RELATIVE_GAP`] times the foreground depth span.
    pub background_gap: Option<T>,
    pub polarity: Polarity,
}

impl<T: Real> Default for AdaptiveThresholdParams<T> {
    fn default() -> Self {
        Self {
            window: 9,
            sigma: None,
            offset: None,
            background_marker: None,
            background_sentinel: None,
            background_gap: None,
            polarity: Polarity::Deeper,
        }
    }
}

impl<T: Real> AdaptiveThresholdParams<T> {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn sigma_or_default(&self) -> T {
        self.sigma
            .unwrap_or_else(|| T::from_usize_lossy(self.window) / T::lit(4.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::param(format!(
                "threshold window must be odd and >= 3, got {}",
                self.window
            )));
        }
        let sigma = self.sigma_or_default();
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        if let Some(c) = self.offset {
            if !(c >= T::zero()) || !c.is_finite() {
                return Err(Error::param(format!("offset must be >= 0, got {c}")));
            }
        }
        if let Some(g) = self.background_gap {
            if !(g > T::zero()) || !g.is_finite() {
                return Err(Error::param(format!("background_gap must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Normalised `w x w` Gaussian weights, row-major with the centre at `(r, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWindow<T> {
    width: usize,
    weights: Vec<T>,
    // Normalised 1-D factor; `weights[j][i] = axis[i] * axis[j]`.
    axis: Vec<T>,
}

impl<T: Real> GaussianWindow<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.width / 2
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weight at offset `(i, j)` from the centre, `|i|, |j| <= r`.
    pub fn weight(&self, i: isize, j: isize) -> T {
        let r = self.radius() as isize;
        self.weights[((j + r) as usize) * self.width + (i + r) as usize]
    }
}

pub fn gaussian_window<T: Real>(w: usize, sigma: T) -> Result<GaussianWindow<T>> {
    if w < 3 || w % 2 == 0 {
        return Err(Error::param(format!("window must be odd and >= 3, got {w}")));
    }
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let r = (w / 2) as isize;
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (-r..=r)
        .map(|i| {
            let i = T::lit(i as f64);
            (-(i * i) / two_s2).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    let axis: Vec<T> = raw.iter().map(|v| *v / total).collect();
    let mut weights = Vec::with_capacity(w * w);
    for j in 0..w {
        for i in 0..w {
            weights.push(axis[i] * axis[j]);
        }
    }
    Ok(GaussianWindow {
        width: w,
        weights,
        axis,
    })
}

/// Quantities derived from a depth map before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDepth<T> {
    /// Depth with background pixels filled.
    pub depth: ScalarGrid<T>,
    pub foreground: Mask,
    pub offset: T,
}

/// Applies the background policy and resolves the default offset.
pub fn prepare_depth<T: Real>(depth: &ScalarGrid<T>, params: &AdaptiveThresholdParams<T>) -> Result<PreparedDepth<T>> {
    params.validate()?;
    let (w, h) = depth.dims();
    let foreground = match params.background_marker {
        Some(marker) => Mask::from_fn(w, h, |x, y| depth.get(x, y) < marker),
        None => Mask::from_fn(w, h, |_, _| true),
    };
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (v, fg) in depth.values().iter().zip(foreground.bits()) {
        if *fg {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let has_fg = lo.is_finite();
    let span = if has_fg && hi > lo { hi - lo } else { T::one() };
    let offset = params
        .offset
        .unwrap_or_else(|| T::lit(DEFAULT_RELATIVE_OFFSET) * span);
    if foreground.bits().iter().all(|b| *b) {
        return Ok(PreparedDepth {
            depth: depth.clone(),
            foreground,
            offset,
        });
    }
    let filled = match params.background_sentinel {
        Some(s) => ScalarGrid::from_fn(w, h, |x, y| if foreground.get(x, y) { depth.get(x, y) } else { s }),
        None => {
            let gap = params
                .background_gap
                .unwrap_or_else(|| T::lit(DEFAULT_RELATIVE_GAP) * span);
            let fallback = if has_fg { lo } else { T::zero() } - gap;
            let window = gaussian_window(params.window, params.sigma_or_default())?;
            let weight = ScalarGrid::from_fn(w, h, |x, y| if foreground.get(x, y) { T::one() } else { T::zero() });
            let masked = ScalarGrid::from_fn(w, h, |x, y| if foreground.get(x, y) { depth.get(x, y) - lo } else { T::zero() });
            let num = weighted_local_mean(&masked, &window);
            let den = weighted_local_mean(&weight, &window);
            ScalarGrid::from_fn(w, h, |x, y| {
                if foreground.get(x, y) {
                    depth.get(x, y)
                } else if den.get(x, y) > T::zero() {
                    lo + num.get(x, y) / den.get(x, y) - gap
                } else {
                    fallback
                }
            })
        }
    };
    Ok(PreparedDepth {
        depth: filled,
        foreground,
        offset,
    })
}

/// Gaussian-weighted local mean of `grid`. Windows are clipped at the image
/// border and the weights renormalised over the in-bounds pixels.
pub fn weighted_local_mean<T: Real>(grid: &ScalarGrid<T>, window: &GaussianWindow<T>) -> ScalarGrid<T> {
    let (w, h) = grid.dims();
    let r = window.radius();
    let axis = &window.axis;
    if w == 0 || h == 0 {
        return grid.clone();
    }
    // Averaging offsets from a reference value keeps constant regions exact.
    let reference = grid.get(0, 0);
    // both numerator and in-bounds weight mass factor over the two axes
    let mut rows = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            for xx in lo..=hi {
                acc += axis[xx + r - x] * (grid.get(xx, y) - reference);
            }
            rows[y * w + x] = acc;
        }
    }
    let mass = |pos: usize, len: usize| -> T {
        let lo = pos.saturating_sub(r);
        let hi = (pos + r).min(len - 1);
        (lo..=hi).map(|p| axis[p + r - pos]).sum()
    };
    let col_mass: Vec<T> = (0..w).map(|x| mass(x, w)).collect();
    let row_mass: Vec<T> = (0..h).map(|y| mass(y, h)).collect();
    ScalarGrid::from_fn(w, h, |x, y| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        let mut acc = T::zero();
        for yy in lo..=hi {
            acc += axis[yy + r - y] * rows[yy * w + x];
        }
        reference + acc / (col_mass[x] * row_mass[y])
    })
}

/// Threshold map `T` for a depth raster (after background substitution).
pub fn adaptive_threshold_map<T: Real>(depth: &ScalarGrid<T>, params: &AdaptiveThresholdParams<T>) -> Result<ScalarGrid<T>> {
    let prepared = prepare_depth(depth, params)?;
    let window = gaussian_window(params.window, params.sigma_or_default())?;
    Ok(weighted_local_mean(&prepared.depth, &window))
}

/// Depth edge map `d`.
pub fn depth_edge_detect<T: Real>(depth: &ScalarGrid<T>, params: &AdaptiveThresholdParams<T>) -> Result<EdgeMap> {
    let prepared = prepare_depth(depth, params)?;
    let window = gaussian_window(params.window, params.sigma_or_default())?;
    let thresh = weighted_local_mean(&prepared.depth, &window);
    let (w, h) = depth.dims();
    let c = prepared.offset;
    Ok(Mask::from_fn(w, h, |x, y| {
        if !prepared.foreground.get(x, y) {
            return false;
        }
        let diff = prepared.depth.get(x, y) - thresh.get(x, y);
        match params.polarity {
            Polarity::Deeper => diff > c,
            Polarity::Symmetric => diff.abs() > c,
        }
    }))
}

//! Edge scores, SSIM and temporal consistency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EdgeMap, ScalarGrid};
use crate::scalar::Real;

/// Distance-tolerant precision/recall with one-to-many matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tolerance: usize,
    pub matched_pred: usize,
    pub total_pred: usize,
    pub matched_oracle: usize,
    pub total_oracle: usize,
    pub empty_pred: bool,
    pub empty_oracle: bool,
}

/// A predicted pixel matches if an oracle pixel lies within Chebyshev
/// distance `tol`, and symmetrically for recall.
pub fn edge_prf(pred: &EdgeMap, oracle: &EdgeMap, tol: usize) -> Result<EdgeScore> {
    pred.ensure_same_dims(oracle.dims(), "edge score")?;
    let near_oracle = oracle.dilate(tol);
    let near_pred = pred.dilate(tol);
    let matched_pred = pred.intersection(&near_oracle)?.count();
    let matched_oracle = oracle.intersection(&near_pred)?.count();
    let (total_pred, total_oracle) = (pred.count(), oracle.count());
    let precision = if total_pred == 0 { 0.0 } else { matched_pred as f64 / total_pred as f64 };
    let recall = if total_oracle == 0 { 1.0 } else { matched_oracle as f64 / total_oracle as f64 };
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EdgeScore {
        precision,
        recall,
        f1,
        tolerance: tol,
        matched_pred,
        total_pred,
        matched_oracle,
        total_oracle,
        empty_pred: total_pred == 0,
        empty_oracle: total_oracle == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

/// Mean SSIM over every fully in-bounds `window x window` position, uniform
/// weights and population statistics. Rasters smaller than the window are
/// scored as a single window.
pub fn ssim<T: Real>(a: &ScalarGrid<T>, b: &ScalarGrid<T>, params: &SsimParams) -> Result<T> {
    a.ensure_same_dims(b.dims(), "ssim")?;
    if params.window == 0 || !(params.dynamic_range > 0.0) {
        return Err(Error::param("ssim window and dynamic_range must be positive"));
    }
    let (w, h) = a.dims();
    if w == 0 || h == 0 {
        return Err(Error::param("ssim of an empty raster"));
    }
    let (ww, wh) = (params.window.min(w), params.window.min(h));
    let c1 = T::lit((params.k1 * params.dynamic_range).powi(2));
    let c2 = T::lit((params.k2 * params.dynamic_range).powi(2));
    let av = a.values();
    let bv = b.values();
    let (ow, oh) = (w - ww + 1, h - wh + 1);

    // horizontal window sums of a, b, a^2, b^2, ab
    let mut rows = vec![[T::zero(); 5]; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut s = [T::zero(); 5];
            for i in 0..ww {
                let (p, q) = (av[y * w + x + i], bv[y * w + x + i]);
                s[0] += p;
                s[1] += q;
                s[2] += p * p;
                s[3] += q * q;
                s[4] += p * q;
            }
            rows[y * ow + x] = s;
        }
    }
    let n = T::from_usize_lossy(ww * wh);
    let two = T::lit(2.0);
    let mut total = T::zero();
    for y in 0..oh {
        for x in 0..ow {
            let mut s = [T::zero(); 5];
            for j in 0..wh {
                let r = &rows[(y + j) * ow + x];
                for k in 0..5 {
                    s[k] += r[k];
                }
            }
            let (ma, mb) = (s[0] / n, s[1] / n);
            let va = s[2] / n - ma * ma;
            let vb = s[3] / n - mb * mb;
            let cov = s[4] / n - ma * mb;
            total += ((two * ma * mb + c1) * (two * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / T::from_usize_lossy(ow * oh))
}

/// Mean SSIM over consecutive frame pairs.
pub fn temporal_consistency<T: Real>(frames: &[ScalarGrid<T>], params: &SsimParams) -> Result<T> {
    if frames.len() < 2 {
        return Err(Error::param(format!(
            "temporal consistency needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut total = T::zero();
    for (k, pair) in frames.windows(2).enumerate() {
        total += ssim(&pair[0], &pair[1], params).map_err(|e| e.in_frame(k + 1))?;
    }
    Ok(total / T::from_usize_lossy(frames.len() - 1))
}

/// Edge map as a `{0, 1}` grid.
pub fn edge_grid<T: Real>(m: &EdgeMap) -> ScalarGrid<T> {
    ScalarGrid::from_fn(m.width(), m.height(), |x, y| if m.get(x, y) { T::one() } else { T::zero() })
}

pub fn temporal_consistency_edges(frames: &[EdgeMap], params: &SsimParams) -> Result<f64> {
    let grids: Vec<ScalarGrid<f64>> = frames.iter().map(edge_grid).collect();
    temporal_consistency(&grids, params)
}

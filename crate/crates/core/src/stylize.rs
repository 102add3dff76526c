//! Patch losses for single-stage stylization and a toy affine stylizer.
//!
//! Patches are flattened row-major with interleaved channels, so component
//! `(py * P + px) * 3 + c` of a patch vector is channel `c` of pixel
//! `(px, py)` inside the patch.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EdgeMap, RgbImage};
use crate::scalar::Real;

pub const DEFAULT_PATCH_PX: usize = 8;

/// Norm below which a patch vector counts as zero for cosine similarity.
pub const ZERO_NORM: f64 = 1e-12;

/// Non-overlapping square patches of an RGB image with their edge footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet<T> {
    patch_px: usize,
    data: Vec<T>,
    /// `P * P` values in `{0, 1}` per patch: the edge map under the patch.
    edges: Vec<T>,
    edge_flags: Vec<bool>,
    /// Whether the source image was padded by edge replication.
    padded: bool,
}

impl<T: Real> PatchSet<T> {
    /// Builds a patch set from flattened patch vectors. `edges` holds `P * P`
    /// values per patch; a patch is flagged when any of them is non-zero.
    pub fn new(patch_px: usize, data: Vec<T>, edges: Vec<T>) -> Result<Self> {
        if patch_px == 0 {
            return Err(Error::param("patch size must be positive"));
        }
        let len = patch_px * patch_px * 3;
        if data.len() % len != 0 {
            return Err(Error::param(format!(
                "patch data length {} is not a multiple of {len}",
                data.len()
            )));
        }
        let n = data.len() / len;
        let area = patch_px * patch_px;
        if edges.len() != n * area {
            return Err(Error::param(format!(
                "edge data for {n} patches needs {} values, got {}",
                n * area,
                edges.len()
            )));
        }
        let edge_flags = edges.chunks(area).map(|c| c.iter().any(|v| *v != T::zero())).collect();
        Ok(Self {
            patch_px,
            data,
            edges,
            edge_flags,
            padded: false,
        })
    }

    pub fn len(&self) -> usize {
        self.edge_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_flags.is_empty()
    }

    pub fn patch_px(&self) -> usize {
        self.patch_px
    }

    /// Length of one patch vector, `P * P * 3`.
    pub fn patch_len(&self) -> usize {
        self.patch_px * self.patch_px * 3
    }

    pub fn patch(&self, i: usize) -> &[T] {
        let l = self.patch_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn edge_patch(&self, i: usize) -> &[T] {
        let a = self.patch_px * self.patch_px;
        &self.edges[i * a..(i + 1) * a]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn edge_flags(&self) -> &[bool] {
        &self.edge_flags
    }

    pub fn edge_patch_count(&self) -> usize {
        self.edge_flags.iter().filter(|f| **f).count()
    }

    pub fn padded(&self) -> bool {
        self.padded
    }

    /// Same edges, new patch contents.
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::param(format!(
                "replacement patch data has {} values, expected {}",
                data.len(),
                self.data.len()
            )));
        }
        Ok(Self { data, ..self.clone() })
    }

    fn ensure_compatible(&self, other: &Self, context: &str) -> Result<()> {
        if self.patch_px != other.patch_px || self.len() != other.len() {
            return Err(Error::param(format!(
                "{context}: {} patches of {}px vs {} patches of {}px",
                self.len(),
                self.patch_px,
                other.len(),
                other.patch_px
            )));
        }
        Ok(())
    }
}

/// Row-major tiling into `patch_px`-sided patches. Images whose sides are
/// not multiples of the patch size are padded by replicating the last row
/// and column; [`PatchSet::padded`] records it.
pub fn patchify<T: Real>(image: &RgbImage<T>, e: &EdgeMap, patch_px: usize) -> Result<PatchSet<T>> {
    if patch_px == 0 {
        return Err(Error::param("patch size must be positive"));
    }
    let (w, h) = image.dims();
    e.ensure_same_dims((w, h), "patchify edges")?;
    if w == 0 || h == 0 {
        return Err(Error::param("cannot patchify an empty image"));
    }
    let (nx, ny) = (w.div_ceil(patch_px), h.div_ceil(patch_px));
    let channels = &image.channels;
    let mut data = Vec::with_capacity(nx * ny * patch_px * patch_px * 3);
    let mut edges = Vec::with_capacity(nx * ny * patch_px * patch_px);
    for ty in 0..ny {
        for tx in 0..nx {
            for py in 0..patch_px {
                for px in 0..patch_px {
                    let x = (tx * patch_px + px).min(w - 1);
                    let y = (ty * patch_px + py).min(h - 1);
                    for c in channels {
                        data.push(c.get(x, y));
                    }
                    edges.push(if e.get(x, y) { T::one() } else { T::zero() });
                }
            }
        }
    }
    let mut set = PatchSet::new(patch_px, data, edges)?;
    set.padded = w % patch_px != 0 || h % patch_px != 0;
    Ok(set)
}

/// Sum of squared differences over every component of every patch.
pub fn recon_loss<T: Real>(y: &PatchSet<T>, x: &PatchSet<T>) -> Result<T> {
    y.ensure_compatible(x, "recon loss")?;
    Ok(y.data.iter().zip(&x.data).map(|(a, b)| (*a - *b) * (*a - *b)).sum())
}

fn norm<T: Real>(a: &[T]) -> T {
    a.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(p, q)| *p * *q).sum()
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is
/// (numerically) zero.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let (na, nb) = (norm(a), norm(b));
    let eps = T::lit(ZERO_NORM);
    if na < eps || nb < eps {
        return T::zero();
    }
    (dot(a, b) / (na * nb)).max(-T::one()).min(T::one())
}

/// Adds `scale * d cos(a, b) / d a` to `out`.
fn add_cosine_grad<T: Real>(a: &[T], b: &[T], scale: T, out: &mut [T]) {
    let (na, nb) = (norm(a), norm(b));
    let eps = T::lit(ZERO_NORM);
    if na < eps || nb < eps {
        return;
    }
    let c = dot(a, b) / (na * nb);
    let inv = T::one() / (na * nb);
    let k = c / (na * na);
    for ((o, ai), bi) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (*bi * inv - k * *ai);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    /// Margin of the ranking hinge.
    pub delta: f64,
    pub negatives_per_anchor: usize,
    pub rng_seed: u64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            negatives_per_anchor: 4,
            rng_seed: 0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::param(format!("delta must be positive, got {}", self.delta)));
        }
        if self.negatives_per_anchor == 0 {
            return Err(Error::param("negatives_per_anchor must be at least 1"));
        }
        Ok(())
    }
}

/// Anchor/negative index pairs for one training iteration.
///
/// Every edge-flagged patch is an anchor. Each anchor draws
/// `min(K, edge patches - 1)` distinct negatives from the other
/// edge-flagged patches. The generator is seeded from `(rng_seed, iteration)`
/// so a given iteration always sees the same pairs.
pub fn sample_pairs(edge_flags: &[bool], params: &LossParams, iteration: u64) -> Vec<(usize, usize)> {
    let pool: Vec<usize> = (0..edge_flags.len()).filter(|i| edge_flags[*i]).collect();
    if pool.len() < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    rng.set_stream(iteration);
    let k = params.negatives_per_anchor.min(pool.len() - 1);
    let mut pairs = Vec::with_capacity(pool.len() * k);
    for (a, &j) in pool.iter().enumerate() {
        // sample among the pool with the anchor removed
        for s in index::sample(&mut rng, pool.len() - 1, k) {
            let k_idx = if s >= a { s + 1 } else { s };
            pairs.push((j, pool[k_idx]));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveLoss<T> {
    pub value: T,
    pub pairs: usize,
    /// Hinge terms that were strictly positive.
    pub active: usize,
    /// Fewer than two edge patches: no pairs were formed and the loss is 0.
    pub insufficient_edges: bool,
}

/// Ranking hinge `sum max(0, cos(Y_j, X_k) - cos(Y_j, X_j) + delta)` over the
/// pairs of iteration 0. Anchors come from `x`'s edge flags.
pub fn contrastive_loss<T: Real>(y: &PatchSet<T>, x: &PatchSet<T>, params: &LossParams) -> Result<ContrastiveLoss<T>> {
    contrastive_loss_at(y, x, params, 0)
}

pub fn contrastive_loss_at<T: Real>(
    y: &PatchSet<T>,
    x: &PatchSet<T>,
    params: &LossParams,
    iteration: u64,
) -> Result<ContrastiveLoss<T>> {
    params.validate()?;
    y.ensure_compatible(x, "contrastive loss")?;
    let pairs = sample_pairs(&x.edge_flags, params, iteration);
    let delta = T::lit(params.delta);
    let mut value = T::zero();
    let mut active = 0;
    for (j, k) in &pairs {
        let yj = y.patch(*j);
        let h = cosine(yj, x.patch(*k)) - cosine(yj, x.patch(*j)) + delta;
        if h > T::zero() {
            value += h;
            active += 1;
        }
    }
    Ok(ContrastiveLoss {
        value,
        pairs: pairs.len(),
        active,
        insufficient_edges: x.edge_patch_count() < 2,
    })
}

/// `recon_loss + contrastive_loss` at iteration 0.
pub fn total_loss<T: Real>(y: &PatchSet<T>, x: &PatchSet<T>, params: &LossParams) -> Result<T> {
    total_loss_at(y, x, params, 0)
}

pub fn total_loss_at<T: Real>(y: &PatchSet<T>, x: &PatchSet<T>, params: &LossParams, iteration: u64) -> Result<T> {
    Ok(recon_loss(y, x)? + contrastive_loss_at(y, x, params, iteration)?.value)
}

/// Gradient of [`total_loss`] with respect to every component of `y`,
/// laid out like `y.data()`.
pub fn loss_gradients<T: Real>(y: &PatchSet<T>, x: &PatchSet<T>, params: &LossParams) -> Result<Vec<T>> {
    loss_gradients_at(y, x, params, 0, true)
}

/// As [`loss_gradients`] for a given iteration, optionally without the
/// contrastive term.
pub fn loss_gradients_at<T: Real>(
    y: &PatchSet<T>,
    x: &PatchSet<T>,
    params: &LossParams,
    iteration: u64,
    contrastive: bool,
) -> Result<Vec<T>> {
    params.validate()?;
    y.ensure_compatible(x, "loss gradients")?;
    let two = T::lit(2.0);
    let mut g: Vec<T> = y.data.iter().zip(&x.data).map(|(a, b)| two * (*a - *b)).collect();
    if !contrastive {
        return Ok(g);
    }
    let delta = T::lit(params.delta);
    let l = y.patch_len();
    for (j, k) in sample_pairs(&x.edge_flags, params, iteration) {
        let (yj, xj, xk) = (y.patch(j), x.patch(j), x.patch(k));
        if cosine(yj, xk) - cosine(yj, xj) + delta > T::zero() {
            let out = &mut g[j * l..(j + 1) * l];
            add_cosine_grad(yj, xk, T::one(), out);
            add_cosine_grad(yj, xj, -T::one(), out);
        }
    }
    Ok(g)
}

/// Affine per-patch map from `[Z patch, e patch]` (length `P * P * 4`) to an
/// output patch (length `P * P * 3`).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyStylizer<T> {
    patch_px: usize,
    /// Row-major `out x in`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> ToyStylizer<T> {
    /// Weights uniform in `(-0.01, 0.01)` from `seed`, zero bias.
    pub fn init(patch_px: usize, seed: u64) -> Self {
        let (o, i) = Self::shape_for(patch_px);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..o * i).map(|_| T::lit(rng.random_range(-0.01..0.01))).collect();
        Self {
            patch_px,
            weights,
            bias: vec![T::zero(); o],
        }
    }

    fn shape_for(patch_px: usize) -> (usize, usize) {
        let a = patch_px * patch_px;
        (a * 3, a * 4)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn input(z: &PatchSet<T>, i: usize) -> Vec<T> {
        let mut v = z.patch(i).to_vec();
        v.extend_from_slice(z.edge_patch(i));
        v
    }

    /// Predicted patches for `z`. Outputs are not clamped to `[0, 1]`.
    pub fn forward(&self, z: &PatchSet<T>) -> Result<PatchSet<T>> {
        if z.patch_px != self.patch_px {
            return Err(Error::param(format!(
                "stylizer expects {}px patches, got {}px",
                self.patch_px, z.patch_px
            )));
        }
        let (o, _) = Self::shape_for(self.patch_px);
        let mut out = Vec::with_capacity(z.len() * o);
        for p in 0..z.len() {
            let input = Self::input(z, p);
            for r in 0..o {
                let row = &self.weights[r * input.len()..(r + 1) * input.len()];
                out.push(self.bias[r] + dot(row, &input));
            }
        }
        z.with_data(out)
    }

    fn step(&mut self, z: &PatchSet<T>, grad_y: &[T], lr: T) {
        let (o, n_in) = Self::shape_for(self.patch_px);
        let mut gw = vec![T::zero(); o * n_in];
        let mut gb = vec![T::zero(); o];
        for p in 0..z.len() {
            let input = Self::input(z, p);
            for r in 0..o {
                let g = grad_y[p * o + r];
                if g == T::zero() {
                    continue;
                }
                gb[r] += g;
                for (w, v) in gw[r * n_in..(r + 1) * n_in].iter_mut().zip(&input) {
                    *w += g * *v;
                }
            }
        }
        for (w, g) in self.weights.iter_mut().zip(&gw) {
            *w -= lr * *g;
        }
        for (b, g) in self.bias.iter_mut().zip(&gb) {
            *b -= lr * *g;
        }
    }
}

/// Upper bound on the curvature of the recon loss in the stylizer's
/// parameters: `2 * sum_p (|in_p|^2 + 1)`. Gradient descent on the recon
/// loss alone never increases it when `lr < 1 / bound`.
pub fn recon_curvature_bound<T: Real>(z: &PatchSet<T>) -> T {
    let mut s = T::zero();
    for p in 0..z.len() {
        let zp = z.patch(p);
        let ep = z.edge_patch(p);
        s += dot(zp, zp) + dot(ep, ep) + T::one();
    }
    T::lit(2.0) * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossParams,
    pub lr: f64,
    pub iters: usize,
    pub use_contrastive: bool,
    /// Seed for the weight initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossParams::default(),
            lr: 1e-4,
            iters: 200,
            use_contrastive: true,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent of a [`ToyStylizer`] mapping `z` to `x`.
/// Returns the trained model and the recon loss before every update.
pub fn train_toy<T: Real>(z: &PatchSet<T>, x: &PatchSet<T>, cfg: &TrainConfig) -> Result<(ToyStylizer<T>, Vec<T>)> {
    cfg.loss.validate()?;
    z.ensure_compatible(x, "train_toy")?;
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::param(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    let mut model = ToyStylizer::init(z.patch_px, cfg.seed);
    let lr = T::lit(cfg.lr);
    let mut history = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let y = model.forward(z)?;
        let recon = recon_loss(&y, x)?;
        let total = if cfg.use_contrastive {
            recon + contrastive_loss_at(&y, x, &cfg.loss, it as u64)?.value
        } else {
            recon
        };
        if !total.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        history.push(recon);
        let g = loss_gradients_at(&y, x, &cfg.loss, it as u64, cfg.use_contrastive)?;
        model.step(z, &g, lr);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Mask, ScalarGrid};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_set(n: usize, p: usize, edge_every: usize, r: &mut ChaCha8Rng) -> PatchSet<f64> {
        let data = (0..n * p * p * 3).map(|_| r.random::<f64>()).collect();
        let edges = (0..n * p * p)
            .map(|i| if (i / (p * p)) % edge_every == 0 && i % 5 == 0 { 1.0 } else { 0.0 })
            .collect();
        PatchSet::new(p, data, edges).unwrap()
    }

    fn image(w: usize, h: usize, r: &mut ChaCha8Rng) -> RgbImage<f64> {
        let mut g = || ScalarGrid::from_fn(w, h, |_, _| r.random::<f64>());
        RgbImage::new(g(), g(), g()).unwrap()
    }

    #[test]
    fn patchify_examples() {
        let mut r = rng(1);
        let img = image(16, 16, &mut r);
        let s = patchify(&img, &Mask::new(16, 16), 8).unwrap();
        assert_eq!(s.len(), 4);
        assert!(!s.padded());
        assert!(s.edge_flags().iter().all(|f| !f));
        // patch 1 is the top-right tile; component layout (py * P + px) * 3 + c
        assert_eq!(s.patch(1)[(2 * 8 + 3) * 3 + 1], img.channels[1].get(11, 2));

        let e = Mask::from_fn(20, 12, |_, _| r.random::<f64>() < 0.02);
        let s = patchify(&image(20, 12, &mut r), &e, 8).unwrap();
        assert!(s.padded());
        assert_eq!(s.len(), 3 * 2);
        for (i, flag) in s.edge_flags().iter().enumerate() {
            let (tx, ty) = (i % 3, i / 3);
            let want = e.iter_set().any(|(x, y)| x / 8 == tx && y / 8 == ty);
            assert_eq!(*flag, want, "patch {i}");
        }
        assert!(patchify(&img, &Mask::new(3, 3), 8).is_err());
        assert!(patchify(&img, &Mask::new(16, 16), 0).is_err());
    }

    #[test]
    fn recon_examples() {
        let mut r = rng(2);
        let x = random_set(3, 2, 1, &mut r);
        assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
        let mut d = x.data().to_vec();
        d[5] += 0.5;
        assert!((recon_loss(&x.with_data(d).unwrap(), &x).unwrap() - 0.25).abs() < 1e-15);
        let y = random_set(3, 2, 1, &mut r);
        let mut brute = 0.0;
        for p in 0..3 {
            for c in 0..12 {
                brute += (y.patch(p)[c] - x.patch(p)[c]).powi(2);
            }
        }
        assert!((recon_loss(&y, &x).unwrap() - brute).abs() < 1e-12);
        assert!(recon_loss(&y, &random_set(2, 2, 1, &mut r)).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) - 1.0f64).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 4.0]), 0.0f64);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0f64);
        assert_eq!(cosine(&[1e-14, 0.0], &[1.0, 1.0]), 0.0f64);
        assert!((cosine(&[1.0, 1.0], &[-1.0, -1.0]) + 1.0f64).abs() < 1e-15);
        assert!(cosine(&[3.0, 4.0], &[-3.0, -4.0]) >= -1.0f64);
    }

    #[test]
    fn pairs_are_distinct_edge_patches() {
        let flags = [true, false, true, true, false, true, true, true];
        let p = LossParams::default();
        let pairs = sample_pairs(&flags, &p, 3);
        assert_eq!(pairs.len(), 6 * 4);
        for chunk in pairs.chunks(4) {
            let j = chunk[0].0;
            let mut ks: Vec<usize> = chunk.iter().map(|(a, k)| {
                assert_eq!(*a, j);
                *k
            }).collect();
            assert!(ks.iter().all(|k| flags[*k] && *k != j));
            ks.sort();
            ks.dedup();
            assert_eq!(ks.len(), 4);
        }
        assert_eq!(sample_pairs(&flags, &p, 3), pairs);
        assert_ne!(sample_pairs(&flags, &p, 4), pairs);
        // small pools give every other edge patch
        assert_eq!(sample_pairs(&[true, true], &p, 0), vec![(0, 1), (1, 0)]);
        assert!(sample_pairs(&[true, false], &p, 0).is_empty());
    }

    #[test]
    fn contrastive_examples() {
        let p = LossParams::default();
        // Y_j = X_j, negatives orthogonal
        let data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let x = PatchSet::new(1, data, vec![1.0, 1.0]).unwrap();
        let c = contrastive_loss(&x, &x, &p).unwrap();
        assert_eq!((c.value, c.pairs, c.active), (0.0, 2, 0));
        // Y_j = X_j = X_k
        let x = PatchSet::new(1, vec![0.3, 0.2, 0.1, 0.3, 0.2, 0.1], vec![1.0, 1.0]).unwrap();
        let c = contrastive_loss(&x, &x, &p).unwrap();
        assert!((c.value - 0.2f64).abs() < 1e-12);
        // one edge patch
        let x = PatchSet::new(1, vec![0.3, 0.2, 0.1, 0.3, 0.2, 0.1], vec![1.0, 0.0]).unwrap();
        let c = contrastive_loss(&x, &x, &p).unwrap();
        assert!(c.insufficient_edges && c.value == 0.0);
    }

    #[test]
    fn contrastive_matches_brute_force() {
        let mut r = rng(3);
        let p = LossParams {
            rng_seed: 17,
            ..Default::default()
        };
        let x = random_set(12, 2, 2, &mut r);
        let y = random_set(12, 2, 2, &mut r);
        let pairs = sample_pairs(x.edge_flags(), &p, 0);
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
            d / (a.iter().map(|u| u * u).sum::<f64>().sqrt() * b.iter().map(|u| u * u).sum::<f64>().sqrt())
        };
        let brute: f64 = pairs
            .iter()
            .map(|(j, k)| (cos(y.patch(*j), x.patch(*k)) - cos(y.patch(*j), x.patch(*j)) + 0.1).max(0.0))
            .sum();
        let got = contrastive_loss(&y, &x, &p).unwrap();
        assert!((got.value - brute).abs() < 1e-12);
        let total = total_loss(&y, &x, &p).unwrap();
        assert!((total - recon_loss(&y, &x).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let mut r = rng(4);
        let p = LossParams::default();
        let x = random_set(6, 2, 1, &mut r);
        // Y = X: hinge terms are cos(X_j, X_k) - 1 + 0.1, active for similar patches;
        // use orthogonal-ish data instead: no edges means recon only
        let plain = PatchSet::new(2, x.data().to_vec(), vec![0.0; 6 * 4]).unwrap();
        assert!(loss_gradients(&plain, &plain, &p).unwrap().iter().all(|g| *g == 0.0));
        let y = random_set(6, 2, 1, &mut r);
        let y = PatchSet::new(2, y.data().to_vec(), vec![0.0; 24]).unwrap();
        let g = loss_gradients(&y, &plain, &p).unwrap();
        for i in 0..g.len() {
            assert!((g[i] - 2.0 * (y.data()[i] - plain.data()[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut r = rng(100 + seed);
            let p = LossParams {
                rng_seed: seed,
                ..Default::default()
            };
            let x = random_set(10, 2, 1, &mut r);
            let y = x.with_data(x.data().iter().map(|v| v + 0.3 * (r.random::<f64>() - 0.5)).collect()).unwrap();
            let g = loss_gradients(&y, &x, &p).unwrap();
            for _ in 0..10 {
                let i = r.random_range(0..g.len());
                let h = 1e-5;
                let at = |d: f64| {
                    let mut v = y.data().to_vec();
                    v[i] += d;
                    total_loss(&y.with_data(v).unwrap(), &x, &p).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                assert!(rel < 1e-4, "seed {seed} component {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let mut r = rng(5);
        let z = random_set(4, 2, 2, &mut r);
        let x = random_set(4, 2, 2, &mut r);
        let cfg = TrainConfig {
            lr: 0.0,
            iters: 5,
            ..Default::default()
        };
        let (_, h) = train_toy(&z, &x, &cfg).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.iter().all(|v| *v == h[0]));
        assert!(train_toy(&z, &x, &TrainConfig { lr: -1.0, ..cfg }).is_err());
    }

    #[test]
    fn identity_task_descends_monotonically() {
        let mut r = rng(6);
        let z = random_set(16, 2, 3, &mut r);
        let cfg = TrainConfig {
            lr: 0.9 / recon_curvature_bound(&z),
            iters: 60,
            use_contrastive: false,
            ..Default::default()
        };
        let (_, h) = train_toy(&z, &z, &cfg).unwrap();
        for w in h.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
        assert!(h[59] < 0.5 * h[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut r = rng(7);
        let z = random_set(4, 2, 1, &mut r);
        let cfg = TrainConfig {
            lr: 1e6,
            iters: 200,
            use_contrastive: false,
            ..Default::default()
        };
        assert!(matches!(train_toy(&z, &z, &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn forward_is_affine() {
        let mut r = rng(8);
        let z = random_set(3, 2, 1, &mut r);
        let m = ToyStylizer::<f64>::init(2, 9);
        let y = m.forward(&z).unwrap();
        let input: Vec<f64> = z.patch(1).iter().chain(z.edge_patch(1)).copied().collect();
        let want: f64 = m.weights()[5 * 16..6 * 16].iter().zip(&input).map(|(w, v)| w * v).sum();
        assert!((y.patch(1)[5] - want).abs() < 1e-15);
        assert!(m.weights().iter().all(|w| w.abs() < 0.01));
        assert!(m.forward(&random_set(3, 1, 1, &mut r)).is_err());
    }
}

//! Brute-force reference implementations shared by the integration tests.
//! Each one follows the textbook definition directly, with no sliding sums
//! or separable passes.

#![allow(dead_code)]

use flowdepth::depth_edge::AdaptiveThresholdParams;
use flowdepth::metrics::SsimParams;
use flowdepth::raster::{Mask, ScalarGrid};
use flowdepth::stylize::{PatchSet, LossParams, sample_pairs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(r: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> ScalarGrid<f64> {
    ScalarGrid::from_fn(w, h, |_, _| r.random_range(lo..hi))
}

pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Mask {
    Mask::from_fn(w, h, |_, _| r.random_bool(p))
}

fn gauss(i: isize, j: isize, sigma: f64) -> f64 {
    (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp()
}

/// Gaussian mean over in-bounds neighbours of `(x, y)`, optionally only
/// over pixels where `weight_mask` holds. `None` when no pixel qualifies.
fn gaussian_mean(
    d: &ScalarGrid<f64>,
    x: usize,
    y: usize,
    w: usize,
    sigma: f64,
    weight_mask: Option<&Mask>,
) -> Option<f64> {
    let r = (w / 2) as isize;
    let (mut num, mut den) = (0.0, 0.0);
    for j in -r..=r {
        for i in -r..=r {
            let (xx, yy) = (x as isize + i, y as isize + j);
            if xx < 0 || yy < 0 || xx >= d.width() as isize || yy >= d.height() as isize {
                continue;
            }
            let (xx, yy) = (xx as usize, yy as usize);
            if weight_mask.is_some_and(|m| !m.get(xx, yy)) {
                continue;
            }
            let g = gauss(i, j, sigma);
            num += g * d.get(xx, yy);
            den += g;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Threshold map with the local background fill, evaluated from scratch.
pub fn threshold_map(depth: &ScalarGrid<f64>, p: &AdaptiveThresholdParams<f64>) -> ScalarGrid<f64> {
    let (w, h) = depth.dims();
    let sigma = p.sigma.unwrap_or(p.window as f64 / 4.0);
    let fg = Mask::from_fn(w, h, |x, y| p.background_marker.is_none_or(|m| depth.get(x, y) < m));
    let fg_values: Vec<f64> = fg.iter_set().map(|(x, y)| depth.get(x, y)).collect();
    let lo = fg_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fg_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let gap = p
        .background_gap
        .unwrap_or(span * flowdepth::depth_edge::DEFAULT_RELATIVE_GAP);
    let filled = ScalarGrid::from_fn(w, h, |x, y| {
        if fg.get(x, y) {
            depth.get(x, y)
        } else if let Some(s) = p.background_sentinel {
            s
        } else {
            gaussian_mean(depth, x, y, p.window, sigma, Some(&fg)).unwrap_or(lo) - gap
        }
    });
    ScalarGrid::from_fn(w, h, |x, y| {
        gaussian_mean(&filled, x, y, p.window, sigma, None).expect("centre pixel is in bounds")
    })
}

pub fn dilate(m: &Mask, r: usize) -> Mask {
    let (w, h) = m.dims();
    let r = r as isize;
    Mask::from_fn(w, h, |x, y| {
        (-r..=r).any(|j| (-r..=r).any(|i| m.get_signed(x as isize + i, y as isize + j)))
    })
}

pub fn recon(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let aa: f64 = a.iter().map(|p| p * p).sum();
    let bb: f64 = b.iter().map(|q| q * q).sum();
    if aa.sqrt() < 1e-12 || bb.sqrt() < 1e-12 {
        return 0.0;
    }
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Ranking hinge over the sampler's pairs for `iteration`.
pub fn contrastive(y: &PatchSet<f64>, x: &PatchSet<f64>, p: &LossParams, iteration: u64) -> f64 {
    sample_pairs(x.edge_flags(), p, iteration)
        .into_iter()
        .map(|(j, k)| (cosine(y.patch(j), x.patch(k)) - cosine(y.patch(j), x.patch(j)) + p.delta).max(0.0))
        .sum()
}

/// Mean SSIM over all in-bounds windows, each computed in two passes.
pub fn ssim(a: &ScalarGrid<f64>, b: &ScalarGrid<f64>, p: &SsimParams) -> f64 {
    let (w, h) = a.dims();
    let (ww, wh) = (p.window.min(w), p.window.min(h));
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - wh {
        for x0 in 0..=w - ww {
            let mut pa = Vec::new();
            let mut pb = Vec::new();
            for y in y0..y0 + wh {
                for x in x0..x0 + ww {
                    pa.push(a.get(x, y));
                    pb.push(b.get(x, y));
                }
            }
            let n = pa.len() as f64;
            let ma = pa.iter().sum::<f64>() / n;
            let mb = pb.iter().sum::<f64>() / n;
            let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = pa.iter().zip(&pb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Random patch sets with a given number of patches and edge density.
pub fn random_patches(r: &mut ChaCha8Rng, patch_px: usize, n: usize, edge_p: f64) -> (PatchSet<f64>, PatchSet<f64>) {
    let len = patch_px * patch_px * 3;
    let edges: Vec<f64> = (0..n * patch_px * patch_px)
        .map(|_| if r.random_bool(edge_p) { 1.0 } else { 0.0 })
        .collect();
    let y: Vec<f64> = (0..n * len).map(|_| r.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..n * len).map(|_| r.random_range(-1.0..1.0)).collect();
    (
        PatchSet::new(patch_px, y, edges.clone()).unwrap(),
        PatchSet::new(patch_px, x, edges).unwrap(),
    )
}

/// Largest absolute difference between two equally sized grids.
pub fn max_abs_diff(a: &ScalarGrid<f64>, b: &ScalarGrid<f64>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Worst absolute deviation from the brute-force oracles over `instances`
/// random cases per quantity.
#[derive(Debug)]
pub struct OracleReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
}

pub fn oracle_equivalence(instances: usize, seed: u64) -> Vec<OracleReport> {
    use flowdepth::depth_edge::adaptive_threshold_map;
    use flowdepth::stylize::{contrastive_loss_at, cosine as fast_cosine, recon_loss};

    let mut r = rng(seed);
    let mut worst = [0.0f64; 6];
    for case in 0..instances {
        let (w, h) = (r.random_range(3..15), r.random_range(3..15));

        let mut depth = random_grid(&mut r, w, h, 1.0, 3.0);
        let mut p = AdaptiveThresholdParams::<f64>::with_window([3, 5, 7, 9][case % 4]);
        if case % 3 == 0 {
            p.sigma = Some(r.random_range(0.5..3.0));
        }
        if case % 2 == 1 {
            let bg = random_mask(&mut r, w, h, 0.3);
            depth = ScalarGrid::from_fn(w, h, |x, y| if bg.get(x, y) { 100.0 } else { depth.get(x, y) });
            p.background_marker = Some(50.0);
            if case % 5 == 1 {
                p.background_sentinel = Some(0.5);
            }
        }
        let fast = adaptive_threshold_map(&depth, &p).unwrap();
        worst[0] = worst[0].max(max_abs_diff(&fast, &threshold_map(&depth, &p)));

        let m = random_mask(&mut r, w, h, 0.15);
        let rad = r.random_range(0..4);
        let same = m.dilate(rad) == dilate(&m, rad);
        worst[1] = worst[1].max(if same { 0.0 } else { 1.0 });

        let patch_px = r.random_range(1..4);
        let n = r.random_range(2..12);
        let (y, x) = random_patches(&mut r, patch_px, n, 0.3);
        worst[2] = worst[2].max((recon_loss(&y, &x).unwrap() - recon(y.data(), x.data())).abs());
        let (a, b) = (y.patch(0), x.patch(n - 1));
        worst[3] = worst[3].max((fast_cosine(a, b) - cosine(a, b)).abs());
        let lp = LossParams {
            delta: r.random_range(0.05..0.5),
            negatives_per_anchor: r.random_range(1..7),
            rng_seed: r.random(),
        };
        let it = r.random_range(0..50);
        let c = contrastive_loss_at(&y, &x, &lp, it).unwrap().value;
        worst[4] = worst[4].max((c - contrastive(&y, &x, &lp, it)).abs());

        let sp = SsimParams {
            window: r.random_range(2..8),
            ..SsimParams::default()
        };
        let ga = random_grid(&mut r, w, h, 0.0, 1.0);
        let gb = ScalarGrid::from_fn(w, h, |x, y| (ga.get(x, y) + r.random_range(-0.2..0.2)).clamp(0.0, 1.0));
        let s = flowdepth::metrics::ssim(&ga, &gb, &sp).unwrap();
        worst[5] = worst[5].max((s - ssim(&ga, &gb, &sp)).abs());
    }
    ["adaptive_threshold_map", "dilation", "recon_loss", "cosine", "contrastive_loss", "ssim"]
        .into_iter()
        .zip(worst)
        .map(|(name, max_error)| OracleReport {
            name,
            instances,
            max_error,
        })
        .collect()
}

/// Worst relative error between analytic and central-difference gradients
/// of the total loss, over `components` random coordinates for each seed.
pub fn gradient_check(seeds: std::ops::Range<u64>, components: usize, step: f64) -> f64 {
    use flowdepth::stylize::{loss_gradients, total_loss};

    let mut worst = 0.0f64;
    for seed in seeds {
        let mut r = rng(1000 + seed);
        let (y, x) = random_patches(&mut r, 2, 8, 0.4);
        let p = LossParams {
            delta: 0.1,
            negatives_per_anchor: 4,
            rng_seed: seed,
        };
        let g = loss_gradients(&y, &x, &p).unwrap();
        for _ in 0..components {
            let i = r.random_range(0..g.len());
            let at = |v: f64| {
                let mut d = y.data().to_vec();
                d[i] += v;
                total_loss(&y.with_data(d).unwrap(), &x, &p).unwrap()
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

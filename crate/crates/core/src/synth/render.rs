use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Pose, SceneSpec, Shape, Texture};
use crate::error::Result;
use crate::flow::FlowField;
use crate::raster::{BinaryMask, EdgeMap, Mask, RgbImage, ScalarGrid};

/// Everything known about one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub index: usize,
    /// Degraded projection `Z`: thickened contours and a Gaussian blur.
    pub rgb: RgbImage<f64>,
    /// Drawing-style frame with sharp strokes.
    pub clean: RgbImage<f64>,
    pub depth: ScalarGrid<f64>,
    /// Visible part per pixel: 0 for background, `k + 1` for part `k`.
    pub labels: Vec<u16>,
    pub oracle_edges: EdgeMap,
    /// Edge pixels on a boundary where a nearer part covers a farther one.
    pub occluded_boundary: EdgeMap,
    /// Analytic motion to the next frame; zero on the last frame.
    pub flow_to_next: FlowField<f64>,
    pub occlusion_free: bool,
    pub occlusion_rate: f64,
}

impl FrameTruth {
    pub fn foreground(&self) -> BinaryMask {
        let (w, h) = self.depth.dims();
        Mask::from_fn(w, h, |x, y| self.labels[y * w + x] != 0)
    }
}

const NOISE_TABLE: usize = 64;

struct PartTextures {
    noise: Vec<f64>,
}

fn textures(spec: &SceneSpec) -> Vec<PartTextures> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    spec.parts
        .iter()
        .map(|_| PartTextures {
            noise: (0..NOISE_TABLE * NOISE_TABLE).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        })
        .collect()
}

fn value_noise(table: &[f64], x: f64, y: f64) -> f64 {
    let n = NOISE_TABLE as i64;
    let (fx, fy) = (x.floor(), y.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (ax, ay) = (smooth(x - fx), smooth(y - fy));
    let at = |i: i64, j: i64| table[(j.rem_euclid(n) * n + i.rem_euclid(n)) as usize];
    let (i, j) = (fx as i64, fy as i64);
    let top = at(i, j) * (1.0 - ax) + at(i + 1, j) * ax;
    let bottom = at(i, j + 1) * (1.0 - ax) + at(i + 1, j + 1) * ax;
    top * (1.0 - ay) + bottom * ay
}

fn texture_value(textures: &[Texture], noise: &[f64], p: [f64; 2]) -> f64 {
    textures
        .iter()
        .map(|t| match t {
            Texture::Stripes {
                period,
                angle,
                phase,
                amplitude,
            } => {
                let (s, c) = angle.sin_cos();
                amplitude * (std::f64::consts::TAU * (c * p[0] + s * p[1]) / period + phase).sin()
            }
            Texture::Noise { cell, amplitude } => amplitude * value_noise(noise, p[0] / cell, p[1] / cell),
        })
        .sum()
}

pub(crate) fn contains(shape: &Shape, p: [f64; 2]) -> bool {
    match shape {
        Shape::Polygon { vertices } => {
            let mut inside = false;
            let n = vertices.len();
            for i in 0..n {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                if (a[1] > p[1]) != (b[1] > p[1]) {
                    let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                    if p[0] < x {
                        inside = !inside;
                    }
                }
            }
            inside
        }
        Shape::Capsule { a, b, radius } => {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
            (p[0] - cx).hypot(p[1] - cy) <= *radius
        }
    }
}

/// Per-frame rasterization shared by the renderer and [`occlusion_rate`].
pub(crate) struct Coverage {
    pub poses: Vec<Pose>,
    /// `covers[k][i]`: pixel `i` lies inside part `k`.
    pub covers: Vec<Vec<bool>>,
    pub labels: Vec<u16>,
    /// Pixels hidden under a nearer part, counted with multiplicity.
    pub hidden: usize,
}

pub(crate) fn coverage(spec: &SceneSpec, frame: usize) -> Coverage {
    let (w, h) = (spec.width, spec.height);
    let poses: Vec<Pose> = spec.parts.iter().map(|p| p.pose_at(frame)).collect();
    let depths: Vec<f64> = (0..spec.parts.len()).map(|k| spec.effective_depth(k)).collect();
    let mut covers = vec![vec![false; w * h]; spec.parts.len()];
    let mut labels = vec![0u16; w * h];
    let mut hidden = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut best: Option<usize> = None;
            let mut hits = 0;
            for (k, part) in spec.parts.iter().enumerate() {
                if contains(&part.shape, poses[k].invert([x as f64, y as f64])) {
                    covers[k][i] = true;
                    hits += 1;
                    if best.is_none_or(|b| depths[k] < depths[b]) {
                        best = Some(k);
                    }
                }
            }
            hidden += hits.max(1) - 1;
            labels[i] = best.map_or(0, |k| k as u16 + 1);
        }
    }
    Coverage {
        poses,
        covers,
        labels,
        hidden,
    }
}

/// Fractional loss of visible area relative to frame 0, clamped to `[0, 1]`.
///
/// Parts move rigidly, so `1 - |U_i| / |U_0|` equals the growth in hidden
/// area divided by `|U_0|`. The rate is computed in that form from pixel
/// counts, which keeps it exactly zero when nothing overlaps even though the
/// rasterized area of a rotated part varies slightly.
pub fn occlusion_rate(spec: &SceneSpec, i: usize) -> Result<f64> {
    spec.validate()?;
    Ok(rate(&coverage(spec, 0), &coverage(spec, i)))
}

fn rate(rest: &Coverage, now: &Coverage) -> f64 {
    let union = rest.labels.iter().filter(|l| **l != 0).count();
    if union == 0 {
        return 0.0;
    }
    ((now.hidden as f64 - rest.hidden as f64) / union as f64).clamp(0.0, 1.0)
}

pub fn render_sequence(spec: &SceneSpec) -> Result<Vec<FrameTruth>> {
    spec.validate()?;
    let tex = textures(spec);
    let covs: Vec<Coverage> = (0..spec.frames).map(|f| coverage(spec, f)).collect();
    Ok((0..spec.frames)
        .map(|f| {
            let next = covs.get(f + 1);
            render_frame(spec, &tex, f, &covs[f], next, rate(&covs[0], &covs[f]))
        })
        .collect())
}

fn render_frame(
    spec: &SceneSpec,
    tex: &[PartTextures],
    index: usize,
    cov: &Coverage,
    next: Option<&Coverage>,
    occlusion_rate: f64,
) -> FrameTruth {
    let (w, h) = (spec.width, spec.height);
    let labels = &cov.labels;
    let depths: Vec<f64> = (0..spec.parts.len()).map(|k| spec.effective_depth(k)).collect();

    let depth = ScalarGrid::from_fn(w, h, |x, y| match labels[y * w + x] {
        0 => spec.background_depth,
        l => depths[l as usize - 1],
    });

    let label_at = |x: isize, y: isize| -> Option<u16> {
        (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h).then(|| labels[y as usize * w + x as usize])
    };
    const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    let mut oracle_edges = Mask::new(w, h);
    let mut occluded_boundary = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x];
            if a == 0 {
                continue;
            }
            for (dx, dy) in N4 {
                let (qx, qy) = (x as isize + dx, y as isize + dy);
                let Some(b) = label_at(qx, qy) else { continue };
                if b == a {
                    continue;
                }
                oracle_edges.set(x, y, true);
                if b != 0 {
                    let (ka, kb) = (a as usize - 1, b as usize - 1);
                    let far = if depths[ka] > depths[kb] || (depths[ka] == depths[kb] && ka > kb) { ka } else { kb };
                    let qi = qy as usize * w + qx as usize;
                    if cov.covers[far][y * w + x] && cov.covers[far][qi] {
                        occluded_boundary.set(x, y, true);
                    }
                }
            }
        }
    }

    // Fill colours, strokes on the visible part boundaries.
    let mut fill = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let rgb = match labels[i] {
                0 => spec.background_color,
                l => {
                    let k = l as usize - 1;
                    let part = &spec.parts[k];
                    let local = cov.poses[k].invert([x as f64, y as f64]);
                    let t = texture_value(&part.textures, &tex[k].noise, local);
                    part.color.map(|c| (c * (1.0 + t)).clamp(0.0, 1.0))
                }
            };
            for c in 0..3 {
                fill[c][i] = rgb[c];
            }
        }
    }
    let mut stroke = Mask::new(w, h);
    for (x, y) in oracle_edges.iter_set() {
        let k = labels[y * w + x] as usize - 1;
        let r = (spec.parts[k].stroke_width.max(1) - 1) / 2;
        let r = r as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (x as isize + dx, y as isize + dy);
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    stroke.set(px as usize, py as usize, true);
                }
            }
        }
    }
    let paint = |m: &Mask| -> [ScalarGrid<f64>; 3] {
        std::array::from_fn(|c| {
            ScalarGrid::from_fn(w, h, |x, y| if m.get(x, y) { spec.stroke_color[c] } else { fill[c][y * w + x] })
        })
    };
    let [r, g, b] = paint(&stroke);
    let clean = RgbImage { channels: [r, g, b] };
    let thick = paint(&stroke.dilate(1));
    let rgb = RgbImage {
        channels: thick.map(|ch| gaussian_blur(&ch, 1.0)),
    };

    let flow_to_next = match next {
        None => FlowField::zeros(w, h),
        Some(n) => FlowField::from_fn(w, h, |x, y| match labels[y * w + x] {
            0 => [0.0, 0.0],
            l => {
                let k = l as usize - 1;
                let p = [x as f64, y as f64];
                let q = n.poses[k].apply(cov.poses[k].invert(p));
                [q[0] - p[0], q[1] - p[1]]
            }
        }),
    };

    FrameTruth {
        index,
        rgb,
        clean,
        depth,
        labels: labels.clone(),
        oracle_edges,
        occluded_boundary,
        flow_to_next,
        occlusion_free: occlusion_rate == 0.0 && cov.hidden == 0,
        occlusion_rate,
    }
}

/// Separable Gaussian blur with clamped borders, kernel radius `ceil(3 sigma)`.
pub fn gaussian_blur(img: &ScalarGrid<f64>, sigma: f64) -> ScalarGrid<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h) = img.dims();
    let horiz = ScalarGrid::<f64>::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|i| k[(i + r) as usize] * img.get_clamped(x as isize + i, y as isize))
            .sum()
    });
    ScalarGrid::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|i| k[(i + r) as usize] * horiz.get_clamped(x as isize, y as isize + i))
            .sum()
    })
}

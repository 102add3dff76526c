use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Description of an articulated 2D scene and its animation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    /// Depth separation per layer step; see [`PartSpec::layer`].
    pub depth_gap: f64,
    /// Depth written for background pixels.
    #[serde(default = "default_background_depth")]
    pub background_depth: f64,
    #[serde(default = "default_background_color")]
    pub background_color: [f64; 3],
    #[serde(default = "default_stroke_color")]
    pub stroke_color: [f64; 3],
    pub parts: Vec<PartSpec>,
}

fn default_background_depth() -> f64 {
    1000.0
}

fn default_background_color() -> [f64; 3] {
    [0.96, 0.96, 0.94]
}

fn default_stroke_color() -> [f64; 3] {
    [0.08, 0.07, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    #[serde(default)]
    pub name: String,
    pub shape: Shape,
    pub depth: f64,
    /// Effective depth is `depth - layer * depth_gap`, so a higher layer sits
    /// in front.
    #[serde(default)]
    pub layer: i32,
    /// Centre of rotation in rest-pose canvas coordinates.
    #[serde(default)]
    pub pivot: [f64; 2],
    pub color: [f64; 3],
    #[serde(default)]
    pub textures: Vec<Texture>,
    #[serde(default = "default_stroke_width")]
    pub stroke_width: usize,
    /// Pose keyframes; empty means the part never moves.
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
}

fn default_stroke_width() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Polygon { vertices: Vec<[f64; 2]> },
    /// Segment `a`-`b` swept by a disk of `radius`.
    Capsule { a: [f64; 2], b: [f64; 2], radius: f64 },
}

/// Intensity modulation in part-local coordinates, so it moves with the part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    Stripes {
        period: f64,
        #[serde(default)]
        angle: f64,
        #[serde(default)]
        phase: f64,
        amplitude: f64,
    },
    /// Smooth value noise on a lattice of `cell` pixels.
    Noise { cell: f64, amplitude: f64 },
}

/// Rigid pose at a frame: rotation by `angle` radians about the pivot, then
/// translation by `offset`. Poses between keyframes are linearly interpolated
/// and held constant outside the keyed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: f64,
    #[serde(default)]
    pub angle: f64,
    #[serde(default)]
    pub offset: [f64; 2],
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("canvas {}x{} is empty", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("scene needs at least one frame".into());
        }
        if self.parts.is_empty() {
            return bad("scene has no parts".into());
        }
        if !(self.depth_gap >= 0.0) || !self.depth_gap.is_finite() {
            return bad(format!("depth_gap must be finite and >= 0, got {}", self.depth_gap));
        }
        if self.parts.len() >= u16::MAX as usize {
            return bad("too many parts".into());
        }
        for (i, p) in self.parts.iter().enumerate() {
            let who = if p.name.is_empty() { format!("part {i}") } else { format!("part {i} ({})", p.name) };
            match &p.shape {
                Shape::Polygon { vertices } => {
                    if vertices.len() < 3 || polygon_area(vertices).abs() < 1e-9 {
                        return bad(format!("{who}: degenerate polygon"));
                    }
                }
                Shape::Capsule { radius, .. } => {
                    if !(*radius > 0.0) {
                        return bad(format!("{who}: capsule radius must be positive"));
                    }
                }
            }
            if !p.depth.is_finite() || p.depth >= self.background_depth {
                return bad(format!("{who}: depth must be finite and nearer than the background"));
            }
            for t in &p.textures {
                let ok = match t {
                    Texture::Stripes { period, .. } => *period > 0.0,
                    Texture::Noise { cell, .. } => *cell > 0.0,
                };
                if !ok {
                    return bad(format!("{who}: texture scale must be positive"));
                }
            }
            if p.keyframes.windows(2).any(|k| !(k[1].frame > k[0].frame)) {
                return bad(format!("{who}: keyframes must have increasing frame numbers"));
            }
        }
        Ok(())
    }

    pub fn effective_depth(&self, part: usize) -> f64 {
        let p = &self.parts[part];
        p.depth - p.layer as f64 * self.depth_gap
    }
}

pub(crate) fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Rigid transform `p -> R (p - pivot) + pivot + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub pivot: [f64; 2],
    pub angle: f64,
    pub offset: [f64; 2],
}

impl Pose {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p[0] - self.pivot[0], p[1] - self.pivot[1]);
        [
            c * dx - s * dy + self.pivot[0] + self.offset[0],
            s * dx + c * dy + self.pivot[1] + self.offset[1],
        ]
    }

    pub fn invert(&self, q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (
            q[0] - self.pivot[0] - self.offset[0],
            q[1] - self.pivot[1] - self.offset[1],
        );
        [c * dx + s * dy + self.pivot[0], -s * dx + c * dy + self.pivot[1]]
    }
}

impl PartSpec {
    pub fn pose_at(&self, frame: usize) -> Pose {
        let (angle, offset) = interpolate_keyframes(&self.keyframes, frame as f64);
        Pose {
            pivot: self.pivot,
            angle,
            offset,
        }
    }
}

fn interpolate_keyframes(keys: &[Keyframe], t: f64) -> (f64, [f64; 2]) {
    let Some(first) = keys.first() else {
        return (0.0, [0.0, 0.0]);
    };
    let last = keys[keys.len() - 1];
    if t <= first.frame {
        return (first.angle, first.offset);
    }
    if t >= last.frame {
        return (last.angle, last.offset);
    }
    let k = keys.windows(2).find(|k| t >= k[0].frame && t <= k[1].frame).expect("t inside keyed range");
    let a = (t - k[0].frame) / (k[1].frame - k[0].frame);
    let lerp = |u: f64, v: f64| u + a * (v - u);
    (
        lerp(k[0].angle, k[1].angle),
        [lerp(k[0].offset[0], k[1].offset[0]), lerp(k[0].offset[1], k[1].offset[1])],
    )
}

//! The canonical limb-over-body test scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Keyframe, PartSpec, SceneSpec, Shape, Texture};

pub const CANONICAL_SIZE: usize = 256;
pub const CANONICAL_FRAMES: usize = 20;
/// Arm-over-body depth separation used by the acceptance experiments.
pub const CANONICAL_DEPTH_GAP: f64 = 0.004;

/// Which way the arm swings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Swing {
    /// Across the body, occluding it.
    Over,
    /// Away from the body; no part ever overlaps another.
    Clear,
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Shape {
    // half-pixel corners so the rectangle covers pixel centres x0..=x1, y0..=y1
    Shape::Polygon {
        vertices: vec![
            [x0 - 0.5, y0 - 0.5],
            [x1 + 0.5, y0 - 0.5],
            [x1 + 0.5, y1 + 0.5],
            [x0 - 0.5, y1 + 0.5],
        ],
    }
}

/// A figure with head, body and legs and one textured arm hinged just
/// outside the body's right edge. The arm rests for a few frames, swings
/// over the body (or away from it), then holds still. `seed` jitters arm
/// length, swing extent and timing, and the textures.
pub fn canonical_scene(seed: u64, depth_gap: f64, swing: Swing) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f10e);
    let arm_len: f64 = rng.random_range(80.0..95.0);
    let max_angle: f64 = rng.random_range(0.45..0.6);
    let start = rng.random_range(2..=3) as f64;
    let end = start + rng.random_range(13..=15) as f64;
    let stripe_angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let sign = match swing {
        Swing::Over => 1.0,
        Swing::Clear => -1.0,
    };
    let pivot = [184.0, 90.0];

    let part = |name: &str, shape: Shape, depth: f64, color: [f64; 3], textures: Vec<Texture>| PartSpec {
        name: name.into(),
        shape,
        depth,
        layer: 0,
        pivot: [0.0, 0.0],
        color,
        textures,
        stroke_width: 1,
        keyframes: Vec::new(),
    };
    let weak = |cell: f64| vec![Texture::Noise { cell, amplitude: 0.06 }];

    let arm = PartSpec {
        layer: 1,
        pivot,
        keyframes: vec![
            Keyframe {
                frame: start,
                angle: 0.0,
                offset: [0.0, 0.0],
            },
            Keyframe {
                frame: end,
                angle: sign * max_angle,
                offset: [0.0, 0.0],
            },
        ],
        ..part(
            "arm",
            Shape::Capsule {
                a: pivot,
                b: [pivot[0], pivot[1] + arm_len],
                radius: 9.0,
            },
            10.0,
            [0.62, 0.45, 0.38],
            vec![
                Texture::Noise {
                    cell: 5.0,
                    amplitude: 0.35,
                },
                Texture::Stripes {
                    period: 7.0,
                    angle: stripe_angle,
                    phase: 0.0,
                    amplitude: 0.15,
                },
            ],
        )
    };

    SceneSpec {
        width: CANONICAL_SIZE,
        height: CANONICAL_SIZE,
        frames: CANONICAL_FRAMES,
        seed,
        depth_gap,
        background_depth: 1000.0,
        background_color: [0.96, 0.96, 0.94],
        stroke_color: [0.08, 0.07, 0.1],
        parts: vec![
            part("body", rect(88.0, 80.0, 168.0, 200.0), 10.0, [0.72, 0.78, 0.9], weak(16.0)),
            part(
                "head",
                Shape::Capsule {
                    a: [128.0, 48.0],
                    b: [128.0, 48.0],
                    radius: 20.0,
                },
                9.0,
                [0.93, 0.82, 0.7],
                weak(10.0),
            ),
            part("left leg", rect(98.0, 205.0, 120.0, 245.0), 11.0, [0.4, 0.45, 0.6], weak(12.0)),
            part("right leg", rect(136.0, 205.0, 158.0, 245.0), 11.0, [0.4, 0.45, 0.6], weak(12.0)),
            arm,
        ],
    }
}

//! Deterministic articulated 2D scenes with exact ground truth.

mod canonical;
mod render;
mod spec;

pub use canonical::{canonical_scene, Swing, CANONICAL_DEPTH_GAP, CANONICAL_FRAMES, CANONICAL_SIZE};
pub use render::{gaussian_blur, occlusion_rate, render_sequence, FrameTruth};
pub use spec::{Keyframe, PartSpec, Pose, SceneSpec, Shape, Texture};

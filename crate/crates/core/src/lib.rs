//! Occlusion-robust edge maps for drawing-based animation.
//!
//! Depth edges come from Gaussian adaptive thresholding of a depth render.
//! Where parts overlap at similar depths those edges vanish, so edges from
//! the last occlusion-free frame are carried along optical flow, filtered to
//! the object interior and reconnected. The union of both guides a toy
//! patch stylizer trained with a reconstruction and an edge-guided
//! contrastive loss.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases.

pub mod depth_edge;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod flow_edge;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod stylize;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BinaryMask, EdgeMap, Mask};
pub use scalar::Real;

pub type Grid = raster::ScalarGrid<f64>;
pub type Grid32 = raster::ScalarGrid<f32>;
pub type Rgb = raster::RgbImage<f64>;
pub type Rgb32 = raster::RgbImage<f32>;
pub type Flow = flow::FlowField<f64>;
pub type Flow32 = flow::FlowField<f32>;
pub type Points = raster::PointSet<f64>;
pub type ThresholdParams = depth_edge::AdaptiveThresholdParams<f64>;
pub type FlowParams = flow::FlowParams<f64>;
pub type Config = fusion::PipelineConfig<f64>;
pub type Frame = fusion::FrameRecord<f64>;
pub type Patches = stylize::PatchSet<f64>;
pub type Stylizer = stylize::ToyStylizer<f64>;

//! Per-sequence orchestration: depth edges, flow edges and their union.

use serde::{Deserialize, Serialize};

use crate::depth_edge::{depth_edge_detect, prepare_depth, AdaptiveThresholdParams};
use crate::error::{Error, Result};
use crate::flow::{compose_flows, estimate_flow, FlowField, FlowParams};
use crate::flow_edge::{flow_edge_detect_traced, FlowEdgeParams, SourcePolicy};
use crate::raster::{mask_union, EdgeMap, Mask, RgbImage, ScalarGrid};
use crate::scalar::Real;

/// One frame of input: the 2D projection and its depth render.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub index: usize,
    pub rgb: RgbImage<T>,
    pub depth: ScalarGrid<T>,
    /// Whether this frame's edges may seed propagation.
    pub occlusion_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct PipelineConfig<T> {
    pub threshold: AdaptiveThresholdParams<T>,
    pub flow: FlowParams<T>,
    pub flow_edge: FlowEdgeParams,
    pub emit_diagnostics: bool,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            threshold: AdaptiveThresholdParams::default(),
            flow: FlowParams::default(),
            flow_edge: FlowEdgeParams::default(),
            emit_diagnostics: true,
        }
    }
}

impl<T: Real> PipelineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.threshold.validate()?;
        self.flow.validate()?;
        self.flow_edge.validate()
    }
}

/// Edges for one frame. `e` is always `d ∪ f`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBundle {
    pub d: EdgeMap,
    pub f: EdgeMap,
    pub e: EdgeMap,
    pub source_frame: usize,
    /// Number of pairwise flows composed to reach this frame.
    pub chain_length: usize,
    pub dropped_points: usize,
}

/// Frame whose depth edges seed propagation into frame `i`.
///
/// With [`SourcePolicy::LastOcclusionFree`] this is the latest occlusion-free
/// frame before `i`; if there is none but `i` itself is occlusion-free, `i`
/// is its own reference (and receives no flow edges).
pub fn select_reference(occlusion_free: &[bool], i: usize, policy: SourcePolicy) -> Result<usize> {
    if i >= occlusion_free.len() {
        return Err(Error::param(format!(
            "frame {i} out of range for a {}-frame sequence",
            occlusion_free.len()
        )));
    }
    if i == 0 {
        return Ok(0);
    }
    match policy {
        SourcePolicy::PreviousFrame => Ok(i - 1),
        SourcePolicy::LastOcclusionFree => match (0..i).rev().find(|j| occlusion_free[*j]) {
            Some(j) => Ok(j),
            None if occlusion_free[i] => Ok(i),
            None => Err(Error::Config(format!(
                "frame {i}: no occlusion-free frame at or before it to take edges from"
            ))),
        },
    }
}

/// Runs the full detector, estimating pairwise flow from frame luminance.
pub fn run_pipeline<T: Real>(frames: &[FrameRecord<T>], cfg: &PipelineConfig<T>) -> Result<Vec<EdgeBundle>> {
    check_frames(frames)?;
    cfg.validate()?;
    let lum: Vec<ScalarGrid<T>> = frames.iter().map(|f| f.rgb.luminance()).collect();
    let flows = lum
        .windows(2)
        .enumerate()
        .map(|(k, pair)| estimate_flow(&pair[0], &pair[1], &cfg.flow).map_err(|e| e.in_frame(k + 1)))
        .collect::<Result<Vec<_>>>()?;
    run_pipeline_with_flows(frames, cfg, &flows)
}

/// As [`run_pipeline`] with externally supplied flow: `flows[k]` maps frame
/// `k` to frame `k + 1`.
pub fn run_pipeline_with_flows<T: Real>(
    frames: &[FrameRecord<T>],
    cfg: &PipelineConfig<T>,
    flows: &[FlowField<T>],
) -> Result<Vec<EdgeBundle>> {
    check_frames(frames)?;
    cfg.validate()?;
    if flows.len() + 1 != frames.len() {
        return Err(Error::param(format!(
            "{} frames need {} pairwise flows, got {}",
            frames.len(),
            frames.len() - 1,
            flows.len()
        )));
    }
    let dims = frames[0].depth.dims();
    for (k, v) in flows.iter().enumerate() {
        v.ensure_same_dims(dims, "pairwise flow").map_err(|e| e.in_frame(k))?;
    }

    let flags: Vec<bool> = frames.iter().map(|f| f.occlusion_free).collect();
    let mut d_maps = Vec::with_capacity(frames.len());
    let mut fg_maps = Vec::with_capacity(frames.len());
    for f in frames {
        let at = |e: Error| e.in_frame(f.index);
        d_maps.push(depth_edge_detect(&f.depth, &cfg.threshold).map_err(at)?);
        fg_maps.push(prepare_depth(&f.depth, &cfg.threshold).map_err(at)?.foreground);
    }

    // flow from `chain.0` to `chain.1`, extended as frames advance
    let mut chain: Option<(usize, usize, FlowField<T>)> = None;
    let mut out = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let index = frames[i].index;
        let j = select_reference(&flags, i, cfg.flow_edge.source_policy).map_err(|e| e.in_frame(index))?;
        let d = d_maps[i].clone();
        if j == i {
            out.push(EdgeBundle {
                e: d.clone(),
                f: Mask::new(d.width(), d.height()),
                d,
                source_frame: index,
                chain_length: 0,
                dropped_points: 0,
            });
            continue;
        }
        let v = match chain.take() {
            Some((start, end, v)) if start == j && end < i => extend(v, &flows[end..i])?,
            _ => extend(flows[j].clone(), &flows[j + 1..i])?,
        };
        let trace = flow_edge_detect_traced(&d_maps[j], &v, &d, &fg_maps[i], &cfg.flow_edge)
            .map_err(|e| e.in_frame(index))?;
        let e = mask_union(&d, &trace.map)?;
        out.push(EdgeBundle {
            d,
            f: trace.map,
            e,
            source_frame: frames[j].index,
            chain_length: i - j,
            dropped_points: trace.dropped_points,
        });
        chain = Some((j, i, v));
    }
    Ok(out)
}

fn extend<T: Real>(mut v: FlowField<T>, rest: &[FlowField<T>]) -> Result<FlowField<T>> {
    for next in rest {
        v = compose_flows(&v, next)?;
    }
    Ok(v)
}

fn check_frames<T: Real>(frames: &[FrameRecord<T>]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::param("pipeline needs at least one frame"));
    };
    let dims = first.depth.dims();
    for f in frames {
        f.depth.ensure_same_dims(dims, "depth").map_err(|e| e.in_frame(f.index))?;
        if f.rgb.dims() != dims {
            return Err(Error::shape("rgb", dims, f.rgb.dims()).in_frame(f.index));
        }
    }
    Ok(())
}

//! Evaluation reports, the window/interpolation sweep and the two
//! synthetic studies: occlusion recovery and contrastive training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, FlowField};
use crate::flow_edge::Interpolation;
use crate::fusion::{run_pipeline_with_flows, EdgeBundle, FrameRecord, PipelineConfig};
use crate::io::{MetricsConfig, RunConfig};
use crate::metrics::{edge_prf, temporal_consistency_edges};
use crate::raster::{EdgeMap, Mask, RgbImage, ScalarGrid};
use crate::stylize::{patchify, recon_loss, train_toy, PatchSet, TrainConfig};
use crate::synth::{canonical_scene, render_sequence, FrameTruth, SceneSpec, Swing, CANONICAL_DEPTH_GAP};

pub const REPORT_VERSION: &str = "flowdepth-report/1";

/// Upper edges of the occlusion-rate bins; the first bin holds rate 0 only.
pub const RATE_BIN_EDGES: [f64; 6] = [0.0, 0.05, 0.1, 0.2, 0.4, 1.0];

pub fn records_from_truth(truth: &[FrameTruth]) -> Vec<FrameRecord<f64>> {
    truth
        .iter()
        .map(|t| FrameRecord {
            index: t.index,
            rgb: t.rgb.clone(),
            depth: t.depth.clone(),
            occlusion_free: t.occlusion_free,
        })
        .collect()
}

/// Pipeline defaults for a rendered scene: everything at or beyond the
/// scene's background depth is background.
pub fn scene_pipeline_config(spec: &SceneSpec) -> PipelineConfig<f64> {
    let mut cfg = PipelineConfig::default();
    cfg.threshold.background_marker = Some(spec.background_depth);
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Edge-map SSIM against the previous frame.
    pub ssim_prev: Option<f64>,
    pub occlusion_rate: f64,
    /// Recall of the occluded-boundary subset, when the frame has one.
    pub occluded_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    pub lower: f64,
    pub upper: f64,
    pub frames: usize,
    pub mean_f1: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_occluded_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub temporal_consistency: Option<f64>,
    /// Matched over total occluded-boundary pixels, summed over frames.
    pub pooled_occluded_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub frames: Vec<usize>,
    pub per_frame: Vec<FrameScore>,
    pub aggregate: Aggregate,
    pub by_occlusion_rate: Vec<RateBin>,
    pub config_echo: serde_json::Value,
}

/// Ground truth an edge sequence is scored against.
#[derive(Debug, Clone, Copy)]
pub struct EvalTruth<'a> {
    pub oracle_edges: &'a [EdgeMap],
    pub occluded_boundary: Option<&'a [EdgeMap]>,
    pub occlusion_rates: &'a [f64],
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

pub fn evaluate(
    pred: &[EdgeMap],
    truth: EvalTruth<'_>,
    metrics: &MetricsConfig,
    config_echo: serde_json::Value,
) -> Result<EvalReport> {
    let n = pred.len();
    if n == 0 {
        return Err(Error::param("nothing to evaluate"));
    }
    if truth.oracle_edges.len() != n || truth.occlusion_rates.len() != n {
        return Err(Error::param(format!(
            "{n} predicted frames but {} oracle maps and {} occlusion rates",
            truth.oracle_edges.len(),
            truth.occlusion_rates.len()
        )));
    }
    if let Some(occ) = truth.occluded_boundary {
        if occ.len() != n {
            return Err(Error::param(format!("{n} predicted frames but {} occluded maps", occ.len())));
        }
    }
    let mut per_frame = Vec::with_capacity(n);
    let (mut matched, mut total) = (0usize, 0usize);
    for i in 0..n {
        let at = |e: Error| e.in_frame(i);
        let s = edge_prf(&pred[i], &truth.oracle_edges[i], metrics.tolerance).map_err(at)?;
        let occluded_recall = match truth.occluded_boundary {
            Some(occ) if !occ[i].is_empty() => {
                let o = edge_prf(&pred[i], &occ[i], metrics.tolerance).map_err(at)?;
                matched += o.matched_oracle;
                total += o.total_oracle;
                Some(o.recall)
            }
            _ => None,
        };
        let ssim_prev = if i > 0 {
            Some(temporal_consistency_edges(&pred[i - 1..=i], &metrics.ssim).map_err(at)?)
        } else {
            None
        };
        per_frame.push(FrameScore {
            frame: i,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            ssim_prev,
            occlusion_rate: truth.occlusion_rates[i],
            occluded_recall,
        });
    }
    let mut by_occlusion_rate = Vec::with_capacity(RATE_BIN_EDGES.len());
    for (b, upper) in RATE_BIN_EDGES.iter().enumerate() {
        let lower = if b == 0 { 0.0 } else { RATE_BIN_EDGES[b - 1] };
        let inside = |r: f64| if b == 0 { r == 0.0 } else { r > lower && r <= *upper };
        let members: Vec<&FrameScore> = per_frame.iter().filter(|s| inside(s.occlusion_rate)).collect();
        by_occlusion_rate.push(RateBin {
            lower,
            upper: *upper,
            frames: members.len(),
            mean_f1: mean(members.iter().map(|s| s.f1)),
            mean_recall: mean(members.iter().map(|s| s.recall)),
            mean_occluded_recall: mean(members.iter().filter_map(|s| s.occluded_recall)),
        });
    }
    let aggregate = Aggregate {
        mean_precision: mean(per_frame.iter().map(|s| s.precision)).unwrap_or(0.0),
        mean_recall: mean(per_frame.iter().map(|s| s.recall)).unwrap_or(0.0),
        mean_f1: mean(per_frame.iter().map(|s| s.f1)).unwrap_or(0.0),
        temporal_consistency: mean(per_frame.iter().filter_map(|s| s.ssim_prev)),
        pooled_occluded_recall: (total > 0).then(|| matched as f64 / total as f64),
    };
    Ok(EvalReport {
        version: REPORT_VERSION.into(),
        frames: (0..n).collect(),
        per_frame,
        aggregate,
        by_occlusion_rate,
        config_echo,
    })
}

/// One sequence of a sweep suite.
#[derive(Debug, Clone)]
pub struct SuiteSequence {
    pub frames: Vec<FrameRecord<f64>>,
    /// Pairwise flows; estimated from luminance when absent.
    pub flows: Option<Vec<FlowField<f64>>>,
    pub oracle_edges: Vec<EdgeMap>,
    pub occluded_boundary: Option<Vec<EdgeMap>>,
    pub occlusion_rates: Vec<f64>,
}

impl SuiteSequence {
    pub fn from_truth(truth: &[FrameTruth]) -> Self {
        Self {
            frames: records_from_truth(truth),
            flows: None,
            oracle_edges: truth.iter().map(|t| t.oracle_edges.clone()).collect(),
            occluded_boundary: Some(truth.iter().map(|t| t.occluded_boundary.clone()).collect()),
            occlusion_rates: truth.iter().map(|t| t.occlusion_rate).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub window: usize,
    pub interpolation: Interpolation,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub temporal_consistency: Option<f64>,
    pub pooled_occluded_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: String,
    pub sequences: usize,
    pub cells: Vec<SweepCell>,
    /// Largest minus smallest mean F1 across windows, per interpolation.
    pub f1_spread: Vec<(Interpolation, f64)>,
    pub config_echo: serde_json::Value,
}

/// Runs the pipeline for every `(window, interpolation)` pair and scores
/// each against the oracle edges. Values are means over all frames of all
/// sequences; flow is estimated once per sequence.
pub fn sweep(
    suite: &[SuiteSequence],
    base: &RunConfig,
    windows: &[usize],
    interpolations: &[Interpolation],
) -> Result<SweepReport> {
    if suite.is_empty() || windows.is_empty() || interpolations.is_empty() {
        return Err(Error::param("sweep needs at least one sequence, window and interpolation"));
    }
    let mut flows = Vec::with_capacity(suite.len());
    for seq in suite {
        flows.push(match &seq.flows {
            Some(f) => f.clone(),
            None => estimate_pairwise(&seq.frames, base)?,
        });
    }
    let mut cells = Vec::with_capacity(windows.len() * interpolations.len());
    for &window in windows {
        for &interpolation in interpolations {
            let mut cfg = base.pipeline.clone();
            cfg.threshold.window = window;
            cfg.flow_edge.interpolation = interpolation;
            let mut scores = Vec::new();
            let mut tcs = Vec::new();
            let (mut matched, mut total) = (0.0, 0.0);
            for (seq, v) in suite.iter().zip(&flows) {
                let bundles = run_pipeline_with_flows(&seq.frames, &cfg, v)?;
                let e: Vec<EdgeMap> = bundles.into_iter().map(|b| b.e).collect();
                let truth = EvalTruth {
                    oracle_edges: &seq.oracle_edges,
                    occluded_boundary: seq.occluded_boundary.as_deref(),
                    occlusion_rates: &seq.occlusion_rates,
                };
                let r = evaluate(&e, truth, &base.metrics, serde_json::Value::Null)?;
                if let Some(tc) = r.aggregate.temporal_consistency {
                    tcs.push(tc);
                }
                for s in &r.per_frame {
                    if let (Some(rec), Some(occ)) = (s.occluded_recall, seq.occluded_boundary.as_ref()) {
                        let n = occ[s.frame].count() as f64;
                        matched += rec * n;
                        total += n;
                    }
                }
                scores.extend(r.per_frame);
            }
            cells.push(SweepCell {
                window,
                interpolation,
                mean_precision: mean(scores.iter().map(|s| s.precision)).unwrap_or(0.0),
                mean_recall: mean(scores.iter().map(|s| s.recall)).unwrap_or(0.0),
                mean_f1: mean(scores.iter().map(|s| s.f1)).unwrap_or(0.0),
                temporal_consistency: mean(tcs),
                pooled_occluded_recall: (total > 0.0).then(|| matched / total),
            });
        }
    }
    let f1_spread = interpolations
        .iter()
        .map(|h| {
            let f1s: Vec<f64> = cells.iter().filter(|c| c.interpolation == *h).map(|c| c.mean_f1).collect();
            let hi = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = f1s.iter().cloned().fold(f64::INFINITY, f64::min);
            (*h, hi - lo)
        })
        .collect();
    Ok(SweepReport {
        version: REPORT_VERSION.into(),
        sequences: suite.len(),
        cells,
        f1_spread,
        config_echo: serde_json::to_value(base).expect("config serializes"),
    })
}

/// Flow from each frame to the next, estimated on luminance.
pub fn estimate_pairwise(frames: &[FrameRecord<f64>], cfg: &RunConfig) -> Result<Vec<FlowField<f64>>> {
    let lum: Vec<ScalarGrid<f64>> = frames.iter().map(|f| f.rgb.luminance()).collect();
    lum.windows(2)
        .enumerate()
        .map(|(k, p)| estimate_flow(&p[0], &p[1], &cfg.pipeline.flow).map_err(|e| e.in_frame(k + 1)))
        .collect()
}

/// Depth-only and fused edges on one canonical occluding sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccludedFrame {
    pub frame: usize,
    pub occlusion_rate: f64,
    pub occluded_px: usize,
    pub d_recall: f64,
    pub e_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionRun {
    pub seed: u64,
    pub depth_gap: f64,
    pub frames: Vec<OccludedFrame>,
    /// Occluded-boundary recall of `d`, pooled over the occluded frames.
    pub pooled_d_recall: f64,
    pub min_e_recall: f64,
    pub tc_e: f64,
    pub tc_d: f64,
    /// Wall-clock pipeline time, excluding rendering.
    pub pipeline_seconds: f64,
}

/// Renders the canonical arm-over-body scene and measures how much of the
/// occluded boundary the depth-only and fused edges recover at `tol`.
pub fn occlusion_recovery(seed: u64, depth_gap: f64, cfg: &RunConfig) -> Result<(OcclusionRun, Vec<EdgeBundle>)> {
    let spec = canonical_scene(seed, depth_gap, Swing::Over);
    let truth = render_sequence(&spec)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.threshold.background_marker = Some(spec.background_depth);
    let records = records_from_truth(&truth);
    let start = Instant::now();
    let bundles = crate::fusion::run_pipeline(&records, &pipeline)?;
    let pipeline_seconds = start.elapsed().as_secs_f64();
    let tol = cfg.metrics.tolerance;
    let mut frames = Vec::new();
    let (mut matched, mut total) = (0usize, 0usize);
    for (t, b) in truth.iter().zip(&bundles) {
        if t.occluded_boundary.is_empty() {
            continue;
        }
        let d = edge_prf(&b.d, &t.occluded_boundary, tol)?;
        let e = edge_prf(&b.e, &t.occluded_boundary, tol)?;
        matched += d.matched_oracle;
        total += d.total_oracle;
        frames.push(OccludedFrame {
            frame: t.index,
            occlusion_rate: t.occlusion_rate,
            occluded_px: d.total_oracle,
            d_recall: d.recall,
            e_recall: e.recall,
        });
    }
    let e_maps: Vec<EdgeMap> = bundles.iter().map(|b| b.e.clone()).collect();
    let d_maps: Vec<EdgeMap> = bundles.iter().map(|b| b.d.clone()).collect();
    let run = OcclusionRun {
        seed,
        depth_gap,
        pooled_d_recall: if total == 0 { 1.0 } else { matched as f64 / total as f64 },
        min_e_recall: frames.iter().map(|f| f.e_recall).fold(1.0, f64::min),
        frames,
        tc_e: temporal_consistency_edges(&e_maps, &cfg.metrics.ssim)?,
        tc_d: temporal_consistency_edges(&d_maps, &cfg.metrics.ssim)?,
        pipeline_seconds,
    };
    Ok((run, bundles))
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Crop {
    fn check(&self, dims: (usize, usize)) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.x + self.width > dims.0 || self.y + self.height > dims.1 {
            return Err(Error::param(format!(
                "crop {}x{}+{}+{} does not fit a {}x{} image",
                self.width, self.height, self.x, self.y, dims.0, dims.1
            )));
        }
        Ok(())
    }

    fn grid(&self, g: &ScalarGrid<f64>) -> ScalarGrid<f64> {
        ScalarGrid::from_fn(self.width, self.height, |x, y| g.get(self.x + x, self.y + y))
    }

    fn rgb(&self, img: &RgbImage<f64>) -> Result<RgbImage<f64>> {
        self.check(img.dims())?;
        let [r, g, b] = &img.channels;
        RgbImage::new(self.grid(r), self.grid(g), self.grid(b))
    }

    fn mask(&self, m: &Mask) -> Result<Mask> {
        self.check(m.dims())?;
        Ok(Mask::from_fn(self.width, self.height, |x, y| m.get(self.x + x, self.y + y)))
    }

    /// A `size x size` window centred on the mean of `m`'s set pixels,
    /// snapped to multiples of `align` and kept inside the image.
    pub fn around(m: &Mask, size: usize, align: usize) -> Result<Crop> {
        let (w, h) = m.dims();
        if size > w || size > h || align == 0 {
            return Err(Error::param(format!("cannot place a {size}px crop in a {w}x{h} image")));
        }
        let n = m.count().max(1) as f64;
        let (sx, sy) = m.iter_set().fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
        let (cx, cy) = if m.is_empty() { (w as f64 / 2.0, h as f64 / 2.0) } else { (sx / n, sy / n) };
        let place = |c: f64, limit: usize| {
            let start = (c - size as f64 / 2.0).round().max(0.0) as usize;
            let snapped = start / align * align;
            snapped.min((limit - size) / align * align)
        };
        Ok(Crop {
            x: place(cx, w),
            y: place(cy, h),
            width: size,
            height: size,
        })
    }
}

/// Patches for the toy stylizer: degraded input `z` and drawing target `x`,
/// both carrying the guiding edge map.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub z: PatchSet<f64>,
    pub x: PatchSet<f64>,
}

pub fn toy_task(
    rgb: &RgbImage<f64>,
    clean: &RgbImage<f64>,
    e: &EdgeMap,
    crop: Option<Crop>,
    patch_px: usize,
) -> Result<ToyTask> {
    let (rgb, clean, e) = match crop {
        Some(c) => (c.rgb(rgb)?, c.rgb(clean)?, c.mask(e)?),
        None => (rgb.clone(), clean.clone(), e.clone()),
    };
    Ok(ToyTask {
        z: patchify(&rgb, &e, patch_px)?,
        x: patchify(&clean, &e, patch_px)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveSettings {
    pub train: TrainConfig,
    /// A run has converged once its recon loss is at most this fraction of
    /// the initial recon loss.
    pub threshold_fraction: f64,
    pub crop_px: usize,
    pub patch_px: usize,
    pub depth_gap: f64,
}

impl Default for ContrastiveSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            threshold_fraction: 0.05,
            crop_px: 64,
            patch_px: 8,
            depth_gap: CANONICAL_DEPTH_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveSeed {
    pub seed: u64,
    pub threshold: f64,
    /// First iteration whose recon loss is at or below the threshold;
    /// `None` if it is never reached.
    pub iters_with: Option<usize>,
    pub iters_without: Option<usize>,
    pub final_with: f64,
    pub final_without: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveRun {
    pub settings: ContrastiveSettings,
    pub seeds: Vec<ContrastiveSeed>,
    /// Medians with runs that never converge counted as `iters + 1`.
    pub median_iters_with: f64,
    pub median_iters_without: f64,
    pub median_final_with: f64,
    pub median_final_without: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn first_below(history: &[f64], threshold: f64) -> Option<usize> {
    history.iter().position(|v| *v <= threshold)
}

/// The toy task for one seed: last frame of a canonical occluding scene,
/// cropped around its occluded boundary, guided by the pipeline's `e`.
pub fn canonical_toy_task(seed: u64, settings: &ContrastiveSettings) -> Result<ToyTask> {
    let spec = canonical_scene(seed, settings.depth_gap, Swing::Over);
    let truth = render_sequence(&spec)?;
    let bundles = crate::fusion::run_pipeline(&records_from_truth(&truth), &scene_pipeline_config(&spec))?;
    let last = truth.last().expect("canonical scenes have frames");
    let crop = Crop::around(&last.occluded_boundary, settings.crop_px, settings.patch_px)?;
    toy_task(&last.rgb, &last.clean, &bundles[last.index].e, Some(crop), settings.patch_px)
}

/// Trains the toy stylizer with and without the contrastive term for each
/// seed. The seed drives the scene, the weight initialization and the
/// negative sampling.
pub fn contrastive_benefit(seeds: &[u64], settings: &ContrastiveSettings) -> Result<ContrastiveRun> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let task = canonical_toy_task(seed, settings)?;
        let mut cfg = settings.train;
        cfg.seed = seed;
        cfg.loss.rng_seed = seed;
        cfg.use_contrastive = true;
        let (_, with) = train_toy(&task.z, &task.x, &cfg)?;
        cfg.use_contrastive = false;
        let (_, without) = train_toy(&task.z, &task.x, &cfg)?;
        let threshold = settings.threshold_fraction * without.first().copied().unwrap_or(0.0);
        out.push(ContrastiveSeed {
            seed,
            threshold,
            iters_with: first_below(&with, threshold),
            iters_without: first_below(&without, threshold),
            final_with: with.last().copied().unwrap_or(f64::NAN),
            final_without: without.last().copied().unwrap_or(f64::NAN),
        });
    }
    let cap = (settings.train.iters + 1) as f64;
    let iters = |f: fn(&ContrastiveSeed) -> Option<usize>| {
        let mut v: Vec<f64> = out.iter().map(|s| f(s).map_or(cap, |i| i as f64)).collect();
        median(&mut v)
    };
    let finals = |f: fn(&ContrastiveSeed) -> f64| {
        let mut v: Vec<f64> = out.iter().map(f).collect();
        median(&mut v)
    };
    Ok(ContrastiveRun {
        settings: *settings,
        median_iters_with: iters(|s| s.iters_with),
        median_iters_without: iters(|s| s.iters_without),
        median_final_with: finals(|s| s.final_with),
        median_final_without: finals(|s| s.final_without),
        seeds: out,
    })
}

/// Recon loss of the identity map on a task, for reference.
pub fn identity_recon(task: &ToyTask) -> Result<f64> {
    recon_loss(&task.z, &task.x)
}

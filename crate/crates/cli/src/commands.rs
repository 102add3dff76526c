use std::path::Path;

use serde::Serialize;
use serde_json::json;

use flowdepth::depth_edge::depth_edge_detect;
use flowdepth::experiments::{self, estimate_pairwise, toy_task, Crop, EvalTruth, SuiteSequence, REPORT_VERSION};
use flowdepth::flow_edge::Interpolation;
use flowdepth::fusion::{run_pipeline, run_pipeline_with_flows, EdgeBundle};
use flowdepth::io::{
    edge_file, flow_file, load_run_config, parse_json, read_bytes, read_manifest, read_pgm, read_sequence, write_bytes,
    write_flo, write_pgm, write_synth_sequence, RunConfig, Sequence, SequenceManifest,
};
use flowdepth::stylize::train_toy as fit_toy;
use flowdepth::synth::{canonical_scene, render_sequence, SceneSpec, Swing, CANONICAL_DEPTH_GAP};
use flowdepth::{EdgeMap, Error};

use crate::{DetectArgs, EvalArgs, FlowArgs, PipelineArgs, SweepArgs, SynthArgs, TrainArgs};

pub const PIPELINE_VERSION: &str = "flowdepth-pipeline/1";
pub const TRAIN_VERSION: &str = "flowdepth-train/1";
pub const CONFIG_FILE: &str = "config.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 for usage errors, 2 for unreadable or inconsistent data, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.root() {
                Error::Param(_) => 1,
                Error::NonFinite { .. } => 3,
                _ => 2,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn format_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Core(Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())?;
    Ok(())
}

fn echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("run config serializes")
}

/// Loads the configuration, or the defaults. A missing background marker
/// is taken from the generator spec in the manifest, when there is one.
fn run_config(path: Option<&Path>, manifest: Option<&SequenceManifest>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    if cfg.pipeline.threshold.background_marker.is_none() {
        cfg.pipeline.threshold.background_marker = manifest.and_then(|m| m.spec.as_ref()).map(|s| s.background_depth);
    }
    Ok(cfg)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_bytes(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    Ok(())
}

fn bundles(seq: &Sequence<f64>, cfg: &RunConfig, external_flow: bool, dir: &Path) -> Result<Vec<EdgeBundle>> {
    if external_flow {
        let flows = seq
            .flows
            .as_ref()
            .ok_or_else(|| format_error(&dir.join(flowdepth::io::MANIFEST_FILE), "manifest lists no flow files"))?;
        Ok(run_pipeline_with_flows(&seq.frames, &cfg.pipeline, flows)?)
    } else {
        Ok(run_pipeline(&seq.frames, &cfg.pipeline)?)
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec: SceneSpec = match &a.spec {
        Some(path) => parse_json(&read_bytes(path)?, path)?,
        None => canonical_scene(
            a.seed.unwrap_or(0),
            a.depth_gap.unwrap_or(CANONICAL_DEPTH_GAP),
            Swing::Over,
        ),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(path) = &a.spec {
        spec.validate()
            .map_err(|e| format_error(path, e.to_string()))?;
    }
    let truth = render_sequence(&spec)?;
    write_synth_sequence(&a.out, &spec, &truth)?;
    Ok(())
}

pub fn detect(a: DetectArgs) -> Result<()> {
    let seq = read_sequence::<f64>(&a.input)?;
    let mut cfg = run_config(None, Some(&seq.manifest))?;
    let p = &mut cfg.pipeline.threshold;
    p.window = a.window;
    p.sigma = a.sigma;
    p.offset = a.offset;
    p.validate()?;
    create_dir(&a.out)?;
    for f in &seq.frames {
        let d = depth_edge_detect(&f.depth, &cfg.pipeline.threshold).map_err(|e| e.in_frame(f.index))?;
        write_pgm(&a.out.join(edge_file("d", f.index)), &d)?;
    }
    write_config(&a.out, &cfg)
}

pub fn flow(a: FlowArgs) -> Result<()> {
    let seq = read_sequence::<f64>(&a.input)?;
    let cfg = run_config(a.config.as_deref(), Some(&seq.manifest))?;
    create_dir(&a.out)?;
    for (k, v) in estimate_pairwise(&seq.frames, &cfg)?.iter().enumerate() {
        write_flo(&a.out.join(flow_file(k)), v)?;
    }
    write_config(&a.out, &cfg)
}

#[derive(Debug, Serialize)]
struct FrameDiagnostics {
    frame: usize,
    source_frame: usize,
    chain_length: usize,
    dropped_points: usize,
    d_pixels: usize,
    f_pixels: usize,
    e_pixels: usize,
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let seq = read_sequence::<f64>(&a.input)?;
    let cfg = run_config(a.config.as_deref(), Some(&seq.manifest))?;
    let out = bundles(&seq, &cfg, a.external_flow, &a.input)?;
    create_dir(&a.out)?;
    let mut frames = Vec::with_capacity(out.len());
    for (i, b) in out.iter().enumerate() {
        for (kind, m) in [("d", &b.d), ("f", &b.f), ("e", &b.e)] {
            write_pgm(&a.out.join(edge_file(kind, i)), m).map_err(|e| e.in_frame(i))?;
        }
        frames.push(FrameDiagnostics {
            frame: i,
            source_frame: b.source_frame,
            chain_length: b.chain_length,
            dropped_points: b.dropped_points,
            d_pixels: b.d.count(),
            f_pixels: b.f.count(),
            e_pixels: b.e.count(),
        });
    }
    write_config(&a.out, &cfg)?;
    let diagnostics = json!({
        "version": PIPELINE_VERSION,
        "frame_count": out.len(),
        "external_flow": a.external_flow,
        "frames": if cfg.pipeline.emit_diagnostics { json!(frames) } else { json!([]) },
        "config_echo": echo(&cfg),
    });
    write_json(&a.out.join(DIAGNOSTICS_FILE), &diagnostics)
}

pub fn train_toy(a: TrainArgs) -> Result<()> {
    let seq = read_sequence::<f64>(&a.input)?;
    let mut cfg = run_config(a.config.as_deref(), Some(&seq.manifest))?;
    if let Some(n) = a.iters {
        cfg.train.iters = n;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.loss.rng_seed = s;
    }
    if a.no_contrastive {
        cfg.train.use_contrastive = false;
    }
    cfg.validate()?;
    let n = seq.frames.len();
    let i = a.frame.unwrap_or(n - 1);
    if i >= n {
        return Err(CliError::Usage(format!("--frame {i} is out of range for {n} frames")));
    }
    let clean = seq
        .clean
        .as_ref()
        .ok_or_else(|| format_error(&a.input.join(flowdepth::io::MANIFEST_FILE), "manifest lists no clean frames"))?;
    let e = match &a.edges {
        Some(dir) => read_pgm(&dir.join(edge_file("e", i))).map_err(|e| e.in_frame(i))?,
        None => bundles(&seq, &cfg, false, &a.input)?.swap_remove(i).e,
    };
    let patch_px = cfg.train.patch_px;
    let crop = match a.crop {
        0 => None,
        size => {
            let focus = seq
                .occluded_boundary
                .as_ref()
                .map(|o| &o[i])
                .filter(|m| !m.is_empty())
                .unwrap_or(&e);
            Some(Crop::around(focus, size, patch_px)?)
        }
    };
    let task = toy_task(&seq.frames[i].rgb, &clean[i], &e, crop, patch_px).map_err(|e| e.in_frame(i))?;
    let (_, history) = fit_toy(&task.z, &task.x, &cfg.train_config()).map_err(|e| e.in_frame(i))?;
    let report = json!({
        "version": TRAIN_VERSION,
        "frame": i,
        "crop": crop,
        "patches": task.z.len(),
        "edge_patches": task.z.edge_patch_count(),
        "use_contrastive": cfg.train.use_contrastive,
        "recon_history": history,
        "final_recon": history.last(),
        "config_echo": echo(&cfg),
    });
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&a.out, &report)
}

/// Reads `name(entry)` for every manifest entry, or `None` if any entry
/// lacks it.
fn manifest_masks(
    dir: &Path,
    m: &SequenceManifest,
    name: impl Fn(&flowdepth::io::FrameEntry) -> Option<&String>,
) -> Result<Option<Vec<EdgeMap>>> {
    if m.frames.iter().any(|f| name(f).is_none()) {
        return Ok(None);
    }
    let maps = m
        .frames
        .iter()
        .map(|f| read_pgm(&dir.join(name(f).expect("checked above"))).map_err(|e| e.in_frame(f.index)))
        .collect::<flowdepth::Result<Vec<_>>>()?;
    Ok(Some(maps))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let manifest = read_manifest(&a.truth)?;
    let mut cfg = run_config(a.config.as_deref(), Some(&manifest))?;
    if let Some(tol) = a.tol {
        cfg.metrics.tolerance = tol;
    }
    let oracle = manifest_masks(&a.truth, &manifest, |f| f.oracle_edges.as_ref())?.ok_or_else(|| {
        format_error(&a.truth.join(flowdepth::io::MANIFEST_FILE), "manifest lists no oracle edge maps")
    })?;
    let occluded = manifest_masks(&a.truth, &manifest, |f| f.occluded_boundary.as_ref())?;
    let rates: Vec<f64> = manifest.frames.iter().map(|f| f.occlusion_rate).collect();
    let pred = (0..manifest.frames.len())
        .map(|i| read_pgm(&a.pred.join(edge_file(&a.kind, i))).map_err(|e| e.in_frame(i)))
        .collect::<flowdepth::Result<Vec<_>>>()?;
    let report = experiments::evaluate(
        &pred,
        EvalTruth {
            oracle_edges: &oracle,
            occluded_boundary: occluded.as_deref(),
            occlusion_rates: &rates,
        },
        &cfg.metrics,
        json!({ "kind": a.kind, "metrics": cfg.metrics }),
    )?;
    debug_assert_eq!(report.version, REPORT_VERSION);
    write_json(&a.out, &report)
}

fn interpolation(name: &str) -> Result<Interpolation> {
    match name.trim() {
        "dilation" => Ok(Interpolation::Dilation),
        "spline" => Ok(Interpolation::Spline),
        other => Err(CliError::Usage(format!(
            "unknown interpolation {other:?}, expected dilation or spline"
        ))),
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let interps = a.interpolations.iter().map(|s| interpolation(s)).collect::<Result<Vec<_>>>()?;
    let mut suite = Vec::with_capacity(a.input.len());
    let mut first: Option<SequenceManifest> = None;
    for dir in &a.input {
        let seq = read_sequence::<f64>(dir)?;
        let no = |what: &str| format_error(&dir.join(flowdepth::io::MANIFEST_FILE), format!("manifest lists no {what}"));
        let oracle_edges = seq.oracle_edges.clone().ok_or_else(|| no("oracle edge maps"))?;
        let flows = if a.external_flow {
            Some(seq.flows.clone().ok_or_else(|| no("flow files"))?)
        } else {
            None
        };
        suite.push(SuiteSequence {
            occlusion_rates: seq.manifest.frames.iter().map(|f| f.occlusion_rate).collect(),
            frames: seq.frames,
            flows,
            oracle_edges,
            occluded_boundary: seq.occluded_boundary,
        });
        first.get_or_insert(seq.manifest);
    }
    let cfg = run_config(a.config.as_deref(), first.as_ref())?;
    let report = experiments::sweep(&suite, &cfg, &a.windows, &interps)?;
    write_json(&a.out, &report)
}

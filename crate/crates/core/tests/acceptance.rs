//! Acceptance run: one line per criterion with its measured values and the
//! pinned tolerance. Exits non-zero when an outcome differs from the
//! expectation recorded in `KNOWN_UNMET`.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use flowdepth::experiments::{
    canonical_toy_task, contrastive_benefit, occlusion_recovery, records_from_truth, scene_pipeline_config, sweep,
    ContrastiveSettings, SuiteSequence,
};
use flowdepth::flow::{estimate_flow, mean_endpoint_error, FlowField, FlowParams};
use flowdepth::flow_edge::Interpolation;
use flowdepth::fusion::{run_pipeline, EdgeBundle};
use flowdepth::io::{self, RunConfig};
use flowdepth::raster::ScalarGrid;
use flowdepth::stylize::train_toy;
use flowdepth::synth::{canonical_scene, render_sequence, Swing, CANONICAL_DEPTH_GAP};

const ORACLE_TOL: f64 = 1e-10;
const ORACLE_INSTANCES: usize = 120;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const MATCH_TOL_PX: usize = 2;
const D_RECALL_MAX: f64 = 0.2;
const E_RECALL_MIN: f64 = 0.7;
const OCCLUSION_SECONDS: f64 = 30.0;
const F1_SPREAD_MAX: f64 = 0.05;
const WINDOWS: [usize; 4] = [7, 9, 11, 13];
const FINAL_RECON_SLACK: f64 = 1.05;
const EPE_MAX: f64 = 0.5;
const ZERO_FLOW_MAX: f64 = 1e-6;
const PIPELINE_SECONDS: f64 = 10.0;
const SEEDS: u64 = 10;

/// Criteria that the implementation does not meet. For 6: depth edges of
/// the piecewise-constant synthetic depth do not flicker, and the
/// propagated edges that appear on occluded frames lower frame-to-frame
/// similarity of `e`.
const KNOWN_UNMET: &[usize] = &[6];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, pass, detail };
    println!(
        "criterion {:>2} [{}]: {}: {}",
        o.id,
        o.name,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o
}

fn texture(x: f64, y: f64) -> f64 {
    0.5 + 0.15 * (0.21 * x + 0.13 * y).sin()
        + 0.12 * (0.17 * y - 0.07 * x + 1.3).sin()
        + 0.1 * (0.31 * x + 0.29 * y + 0.4).cos()
        + 0.08 * (0.1 * x - 0.23 * y + 2.0).cos()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let reps = common::oracle_equivalence(ORACLE_INSTANCES, 11);
    let secs = start.elapsed().as_secs_f64();
    let pass = reps.iter().all(|r| r.max_error <= ORACLE_TOL) && secs < 60.0;
    let detail = reps
        .iter()
        .map(|r| format!("{} {:.1e}", r.name, r.max_error))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        1,
        "oracle equivalence",
        pass,
        format!("{detail} over {ORACLE_INSTANCES} instances each (limit {ORACLE_TOL:e}), {secs:.2} s"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let worst = common::gradient_check(0..SEEDS, 10, FD_STEP);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        2,
        "gradient check",
        worst < FD_REL_TOL && secs < 60.0,
        format!("worst relative error {worst:.2e} over 10 components x {SEEDS} seeds, step {FD_STEP:e} (limit {FD_REL_TOL:e})"),
    )
}

fn union_holds(bundles: &[EdgeBundle]) -> bool {
    bundles.iter().all(|b| b.d.is_subset_of(&b.e) && b.f.is_subset_of(&b.e))
}

fn window_insensitivity(cfg: &RunConfig) -> Outcome {
    let suite: Vec<SuiteSequence> = [Swing::Over, Swing::Clear]
        .into_iter()
        .flat_map(|swing| (0..4).map(move |seed| (seed, swing)))
        .map(|(seed, swing)| {
            let spec = canonical_scene(seed, CANONICAL_DEPTH_GAP, swing);
            SuiteSequence::from_truth(&render_sequence(&spec).expect("canonical scene renders"))
        })
        .collect();
    let mut base = cfg.clone();
    base.pipeline.threshold.background_marker = Some(canonical_scene(0, CANONICAL_DEPTH_GAP, Swing::Over).background_depth);
    let report = sweep(&suite, &base, &WINDOWS, &[Interpolation::Dilation, Interpolation::Spline]).expect("sweep runs");
    let spreads: Vec<String> = report
        .f1_spread
        .iter()
        .map(|(i, s)| format!("{i:?} {s:.4}"))
        .collect();
    let cells: Vec<String> = report
        .cells
        .iter()
        .map(|c| format!("w{} {:?} {:.3}", c.window, c.interpolation, c.mean_f1))
        .collect();
    let pass = report.cells.len() == WINDOWS.len() * 2 && report.f1_spread.iter().all(|(_, s)| *s <= F1_SPREAD_MAX);
    outcome(
        5,
        "window-size insensitivity",
        pass,
        format!(
            "F1 spread {} (limit {F1_SPREAD_MAX}) on {} sequences; F1 {}",
            spreads.join(", "),
            report.sequences,
            cells.join(", ")
        ),
    )
}

fn flow_quality() -> Outcome {
    let (w, h) = (96, 96);
    let params = FlowParams::default();
    let prev = ScalarGrid::from_fn(w, h, |x, y| texture(x as f64, y as f64));
    let mut worst: f64 = 0.0;
    for dy in -3i32..=3 {
        for dx in -3i32..=3 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let curr = ScalarGrid::from_fn(w, h, |x, y| texture(x as f64 - dx as f64, y as f64 - dy as f64));
            let est = estimate_flow(&prev, &curr, &params).expect("flow runs");
            let truth = FlowField::uniform(w, h, [dx as f64, dy as f64]);
            let inner = |x: usize, y: usize| (12..w - 12).contains(&x) && (12..h - 12).contains(&y);
            worst = worst.max(mean_endpoint_error(&est, &truth, inner).expect("same size"));
        }
    }
    let zero = estimate_flow(&prev, &prev, &params).expect("flow runs").max_magnitude();
    outcome(
        8,
        "flow quality",
        worst < EPE_MAX && zero <= ZERO_FLOW_MAX,
        format!("worst mean EPE {worst:.4} px over 48 translations (limit {EPE_MAX}), zero-motion max {zero:.1e} (limit {ZERO_FLOW_MAX:e})"),
    )
}

/// Every file decodes and re-encodes to the same bytes.
fn files_round_trip(dir: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        let again = match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => io::encode_pgm(&io::decode_pgm(&bytes, &path).map_err(|e| e.to_string())?),
            Some("ppm") => io::encode_ppm(&io::decode_ppm::<f64>(&bytes, &path).map_err(|e| e.to_string())?),
            Some("pfm") => io::encode_pfm(&io::decode_pfm::<f32>(&bytes, &path).map_err(|e| e.to_string())?),
            Some("flo") => io::encode_flo(&io::decode_flo::<f32>(&bytes, &path).map_err(|e| e.to_string())?),
            _ => continue,
        };
        if again != bytes {
            return Err(format!("{} does not round-trip", path.display()));
        }
        n += 1;
    }
    Ok(n)
}

fn determinism() -> Outcome {
    let spec = canonical_scene(4, CANONICAL_DEPTH_GAP, Swing::Over);
    let a = render_sequence(&spec).expect("renders");
    let b = render_sequence(&spec).expect("renders");
    let same_render = a.iter().zip(&b).all(|(p, q)| {
        io::encode_ppm(&p.rgb) == io::encode_ppm(&q.rgb)
            && io::encode_pfm(&p.depth) == io::encode_pfm(&q.depth)
            && p.oracle_edges == q.oracle_edges
    });
    let cfg = scene_pipeline_config(&spec);
    let recs = records_from_truth(&a);
    let same_pipeline = run_pipeline(&recs, &cfg).expect("runs") == run_pipeline(&recs, &cfg).expect("runs");

    let settings = ContrastiveSettings::default();
    let task = canonical_toy_task(4, &settings).expect("task builds");
    let mut tc = settings.train;
    tc.iters = 20;
    let h1 = train_toy(&task.z, &task.x, &tc).expect("trains").1;
    let h2 = train_toy(&task.z, &task.x, &tc).expect("trains").1;
    let same_training = h1.iter().zip(&h2).all(|(p, q)| p.to_bits() == q.to_bits());

    let tmp = tempfile::tempdir().expect("temp dir");
    let round_trip = io::write_synth_sequence(tmp.path(), &spec, &a)
        .map_err(|e| e.to_string())
        .and_then(|_| files_round_trip(tmp.path()));
    let tmp2 = tempfile::tempdir().expect("temp dir");
    io::write_synth_sequence(tmp2.path(), &spec, &b).expect("writes");
    let same_dirs = fs::read(tmp.path().join(io::MANIFEST_FILE)).ok() == fs::read(tmp2.path().join(io::MANIFEST_FILE)).ok();
    let cfg_text = RunConfig::default().to_toml();
    let same_config = io::parse_run_config(&cfg_text, Path::new("echo.toml"))
        .map(|c| c.to_toml() == cfg_text)
        .unwrap_or(false);
    let files = round_trip.as_ref().map_or(0, |n| *n);
    outcome(
        9,
        "determinism and round-trips",
        same_render && same_pipeline && same_training && same_dirs && same_config && round_trip.is_ok(),
        format!(
            "render {same_render}, pipeline {same_pipeline}, training {same_training}, manifest {same_dirs}, config {same_config}, {files} files re-encode identically{}",
            round_trip.err().map(|e| format!(" ({e})")).unwrap_or_default()
        ),
    )
}

fn runtime() -> Outcome {
    let spec = canonical_scene(0, CANONICAL_DEPTH_GAP, Swing::Over);
    let recs = records_from_truth(&render_sequence(&spec).expect("renders"));
    let start = Instant::now();
    run_pipeline(&recs, &scene_pipeline_config(&spec)).expect("pipeline runs");
    let secs = start.elapsed().as_secs_f64();
    outcome(
        10,
        "desk-scale runtime",
        secs < PIPELINE_SECONDS,
        format!("{} frames at {}x{} in {secs:.2} s single-threaded (limit {PIPELINE_SECONDS} s)", recs.len(), spec.width, spec.height),
    )
}

fn main() -> ExitCode {
    let mut cfg = RunConfig::default();
    cfg.metrics.tolerance = MATCH_TOL_PX;
    let mut results = vec![oracle_equivalence(), gradient_check()];

    let mut runs = Vec::new();
    let mut all_bundles = Vec::new();
    for seed in 0..SEEDS {
        let (run, bundles) = occlusion_recovery(seed, CANONICAL_DEPTH_GAP, &cfg).expect("occlusion study runs");
        runs.push(run);
        all_bundles.push(bundles);
    }
    let worst_d = runs.iter().map(|r| r.pooled_d_recall).fold(0.0, f64::max);
    let worst_e = runs.iter().map(|r| r.min_e_recall).fold(1.0, f64::min);
    let slowest = runs.iter().map(|r| r.pipeline_seconds).fold(0.0, f64::max);
    let occluded: usize = runs.iter().map(|r| r.frames.len()).sum();
    results.push(outcome(
        3,
        "occlusion recovery",
        worst_d < D_RECALL_MAX && worst_e >= E_RECALL_MIN && slowest < OCCLUSION_SECONDS,
        format!(
            "depth gap {CANONICAL_DEPTH_GAP}, tol {MATCH_TOL_PX} px, {SEEDS} scenes, {occluded} occluded frames: worst pooled d recall {worst_d:.3} (limit < {D_RECALL_MAX}), worst per-frame e recall {worst_e:.3} (limit >= {E_RECALL_MIN}), slowest pipeline {slowest:.2} s (limit {OCCLUSION_SECONDS} s)"
        ),
    ));

    let mut spline_cfg = cfg.clone();
    spline_cfg.pipeline.flow_edge.interpolation = Interpolation::Spline;
    let (_, spline_bundles) = occlusion_recovery(0, CANONICAL_DEPTH_GAP, &spline_cfg).expect("spline run");
    all_bundles.push(spline_bundles);
    let frames: usize = all_bundles.iter().map(|b| b.len()).sum();
    results.push(outcome(
        4,
        "edge-union invariant",
        all_bundles.iter().all(|b| union_holds(b)),
        format!("e contains d and f on all {frames} frames of {} sequences", all_bundles.len()),
    ));

    results.push(window_insensitivity(&cfg));

    let tc_e = runs.iter().map(|r| r.tc_e).sum::<f64>() / runs.len() as f64;
    let tc_d = runs.iter().map(|r| r.tc_d).sum::<f64>() / runs.len() as f64;
    results.push(outcome(
        6,
        "temporal consistency ordering",
        tc_e > tc_d,
        format!("mean TC(e) {tc_e:.4} vs TC(d) {tc_d:.4} over {SEEDS} occluding scenes (need TC(e) > TC(d))"),
    ));

    let settings = ContrastiveSettings::default();
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let c = contrastive_benefit(&seeds, &settings).expect("training runs");
    results.push(outcome(
        7,
        "contrastive benefit",
        c.median_iters_with <= c.median_iters_without && c.median_final_with <= FINAL_RECON_SLACK * c.median_final_without,
        format!(
            "median iterations to {}x initial recon: {} with vs {} without; median final recon {:.3} vs {:.3} (limit {FINAL_RECON_SLACK}x); lr {}, {} iterations, {SEEDS} seeds",
            settings.threshold_fraction,
            c.median_iters_with,
            c.median_iters_without,
            c.median_final_with,
            c.median_final_without,
            settings.train.lr,
            settings.train.iters
        ),
    ));

    results.push(flow_quality());
    results.push(determinism());
    results.push(runtime());

    results.sort_by_key(|o| o.id);
    let failed: Vec<usize> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} of {} criteria met; unmet {:?}; expected unmet {:?}",
        results.len() - failed.len(),
        results.len(),
        failed,
        KNOWN_UNMET
    );
    for o in &results {
        if !o.pass && KNOWN_UNMET.contains(&o.id) {
            println!("criterion {:>2} [{}] is a known unmet criterion", o.id, o.name);
        }
    }
    if failed == KNOWN_UNMET {
        ExitCode::SUCCESS
    } else {
        println!("acceptance outcome differs from the recorded expectation");
        ExitCode::FAILURE
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowdepth::io::{edge_file, read_manifest, read_pgm};
use flowdepth::synth::{canonical_scene, Swing, CANONICAL_DEPTH_GAP};

fn flowdepth(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowdepth"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = flowdepth(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a shortened canonical scene spec and renders it into `seq`.
fn short_sequence(dir: &Path, frames: usize) {
    let mut spec = canonical_scene(1, CANONICAL_DEPTH_GAP, Swing::Over);
    spec.frames = frames;
    fs::write(dir.join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    ok(&["synth", "--spec", "spec.json", "--out", "seq", "--seed", "1"], dir);
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn one_frame_pipeline_gives_e_equal_d() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 1);
    ok(&["pipeline", "--in", "seq", "--out", "out"], tmp.path());
    let out = tmp.path().join("out");
    let d = read_pgm(&out.join(edge_file("d", 0))).unwrap();
    let e = read_pgm(&out.join(edge_file("e", 0))).unwrap();
    assert!(!d.is_empty());
    assert_eq!(d, e);
    let diag = json(&out.join("diagnostics.json"));
    assert_eq!(diag["frame_count"], 1);
    assert!(diag["config_echo"]["pipeline"]["threshold"]["window"].is_number());
    assert!(out.join("config.toml").exists());
}

#[test]
fn sweep_reports_eight_cells() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 3);
    ok(
        &["sweep", "--in", "seq", "--w", "7,9,11,13", "--h", "dilation,spline", "--out", "sweep.json"],
        tmp.path(),
    );
    let r = json(&tmp.path().join("sweep.json"));
    assert_eq!(r["cells"].as_array().unwrap().len(), 8);
    assert_eq!(r["f1_spread"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 3);
    let seq = tmp.path().join("seq");
    let pred = tmp.path().join("pred");
    fs::create_dir(&pred).unwrap();
    for f in read_manifest(&seq).unwrap().frames {
        fs::copy(seq.join(f.oracle_edges.unwrap()), pred.join(edge_file("e", f.index))).unwrap();
    }
    ok(&["eval", "--pred", "pred", "--truth", "seq", "--tol", "2", "--out", "eval.json"], tmp.path());
    let r = json(&tmp.path().join("eval.json"));
    assert_eq!(r["version"], "flowdepth-report/1");
    for f in r["per_frame"].as_array().unwrap() {
        assert_eq!(f["f1"], 1.0);
    }
    assert_eq!(r["frames"].as_array().unwrap().len(), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 4);
    ok(&["pipeline", "--in", "seq", "--out", "a"], tmp.path());
    ok(&["pipeline", "--in", "seq", "--out", "b"], tmp.path());
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4 * 3 + 2);
    for n in names {
        let a = fs::read(tmp.path().join("a").join(&n)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
    let spec = fs::read(tmp.path().join("seq/manifest.json")).unwrap();
    ok(&["synth", "--spec", "spec.json", "--out", "again", "--seed", "1"], tmp.path());
    assert_eq!(spec, fs::read(tmp.path().join("again/manifest.json")).unwrap());
}

#[test]
fn detect_and_flow_write_one_file_per_frame_or_pair() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 3);
    ok(&["detect", "--in", "seq", "--out", "det", "-w", "11", "--offset", "0.01"], tmp.path());
    ok(&["flow", "--in", "seq", "--out", "fl"], tmp.path());
    for i in 0..3 {
        assert!(tmp.path().join("det").join(edge_file("d", i)).exists());
    }
    assert!(tmp.path().join("fl/flow_0001.flo").exists());
    assert!(!tmp.path().join("fl/flow_0002.flo").exists());
    let cfg = fs::read_to_string(tmp.path().join("det/config.toml")).unwrap();
    assert!(cfg.contains("window = 11"), "{cfg}");
}

#[test]
fn train_toy_writes_a_loss_history() {
    let tmp = tempfile::tempdir().unwrap();
    short_sequence(tmp.path(), 2);
    ok(
        &["train-toy", "--in", "seq", "--iters", "5", "--lr", "1e-4", "--seed", "2", "--out", "t.json"],
        tmp.path(),
    );
    let r = json(&tmp.path().join("t.json"));
    let h = r["recon_history"].as_array().unwrap();
    assert_eq!(h.len(), 5);
    assert!(h[4].as_f64().unwrap() < h[0].as_f64().unwrap());
    assert_eq!(r["config_echo"]["seed"], 2);
}

#[test]
fn exit_codes_and_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    short_sequence(dir, 2);

    let out = flowdepth(&["pipeline", "--in"], dir);
    assert_eq!(out.status.code(), Some(1));
    let out = flowdepth(&["detect", "--in", "seq", "--out", "d", "-w", "8"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("window"));

    fs::write(dir.join("bad.toml"), "seed = 1\nwindoww = 3\n").unwrap();
    let out = flowdepth(&["pipeline", "--in", "seq", "--out", "o", "--config", "bad.toml"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("windoww") && stderr(&out).contains("bad.toml"), "{}", stderr(&out));

    let out = flowdepth(&["train-toy", "--in", "seq", "--iters", "60", "--lr", "5", "--out", "t.json"], dir);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("frame 1"));

    fs::write(dir.join("seq/frame_0001_depth.pfm"), b"Pf\n4 4\n-1.0\n\x00").unwrap();
    let out = flowdepth(&["pipeline", "--in", "seq", "--out", "o"], dir);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("frame 1") && msg.contains("frame_0001_depth.pfm"), "{msg}");

    let out = flowdepth(&["eval", "--pred", "nowhere", "--truth", "seq", "--out", "e.json"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere"));
}

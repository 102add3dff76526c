//! Sequence directories: per-frame raster files plus a JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::fusion::FrameRecord;
use crate::raster::{Mask, RgbImage};
use crate::scalar::Real;
use crate::synth::{FrameTruth, SceneSpec};

use super::{flo, netpbm, parse_json, read_bytes, write_bytes};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SEQUENCE_VERSION: &str = "flowdepth-sequence/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    pub rgb: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<String>,
    /// Flow from this frame to the next.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_edges: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluded_boundary: Option<String>,
    pub occlusion_free: bool,
    #[serde(default)]
    pub occlusion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub version: String,
    pub frame_count: usize,
    pub frames: Vec<FrameEntry>,
    /// The generator description, for synthetic sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SceneSpec>,
}

impl SequenceManifest {
    pub fn validate(&self, path: &Path) -> Result<()> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if self.version != SEQUENCE_VERSION {
            return Err(bad(format!(
                "unsupported version {:?}, expected {SEQUENCE_VERSION:?}",
                self.version
            )));
        }
        if self.frames.is_empty() {
            return Err(bad("manifest lists no frames".into()));
        }
        if self.frame_count != self.frames.len() {
            return Err(bad(format!(
                "frame_count is {} but {} frames are listed",
                self.frame_count,
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(bad(format!("frame indices must run 0..n, entry {i} has index {}", f.index)));
            }
        }
        let flows = self.frames[..self.frames.len() - 1].iter().filter(|f| f.flow.is_some()).count();
        if flows != 0 && flows != self.frames.len() - 1 {
            return Err(bad("flow files must be given for every frame but the last, or for none".into()));
        }
        Ok(())
    }

    pub fn has_oracle(&self) -> bool {
        self.frames.iter().all(|f| f.oracle_edges.is_some())
    }
}

/// A sequence loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<T> {
    pub manifest: SequenceManifest,
    pub frames: Vec<FrameRecord<T>>,
    pub clean: Option<Vec<RgbImage<T>>>,
    /// `flows[k]` maps frame `k` to `k + 1`.
    pub flows: Option<Vec<FlowField<T>>>,
    pub oracle_edges: Option<Vec<Mask>>,
    pub occluded_boundary: Option<Vec<Mask>>,
}

pub fn frame_file(i: usize, kind: &str, ext: &str) -> String {
    format!("frame_{i:04}_{kind}.{ext}")
}

/// File name of an edge map written by the pipeline: `kind` is `d`, `f` or `e`.
pub fn edge_file(kind: &str, i: usize) -> String {
    format!("{kind}_{i:04}.pgm")
}

pub fn flow_file(i: usize) -> String {
    format!("flow_{i:04}.flo")
}

pub fn read_manifest(dir: &Path) -> Result<SequenceManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: SequenceManifest = parse_json(&read_bytes(&path)?, &path)?;
    m.validate(&path)?;
    Ok(m)
}

pub fn write_manifest(dir: &Path, m: &SequenceManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    write_bytes(&dir.join(MANIFEST_FILE), text.as_bytes())
}

fn optional<X>(
    dir: &Path,
    entries: &[FrameEntry],
    pick: impl Fn(&FrameEntry) -> Option<&String>,
    read: impl Fn(&Path) -> Result<X>,
) -> Result<Option<Vec<X>>> {
    if entries.iter().any(|e| pick(e).is_none()) {
        return Ok(None);
    }
    entries
        .iter()
        .map(|e| read(&dir.join(pick(e).expect("checked above"))).map_err(|err| err.in_frame(e.index)))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Loads every file the manifest references and checks their dimensions.
pub fn read_sequence<T: Real>(dir: &Path) -> Result<Sequence<T>> {
    let manifest = read_manifest(dir)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for e in &manifest.frames {
        let at = |err: Error| err.in_frame(e.index);
        let rgb = netpbm::read_ppm(&dir.join(&e.rgb)).map_err(at)?;
        let depth = netpbm::read_pfm(&dir.join(&e.depth)).map_err(at)?;
        frames.push(FrameRecord {
            index: e.index,
            rgb,
            depth,
            occlusion_free: e.occlusion_free,
        });
    }
    let dims = frames[0].depth.dims();
    for f in &frames {
        f.depth.ensure_same_dims(dims, "depth").map_err(|e| e.in_frame(f.index))?;
        if f.rgb.dims() != dims {
            return Err(Error::shape("rgb", dims, f.rgb.dims()).in_frame(f.index));
        }
    }
    let n = manifest.frames.len();
    let clean = optional(dir, &manifest.frames, |e| e.clean.as_ref(), |p| netpbm::read_ppm(p))?;
    let flows = optional(dir, &manifest.frames[..n - 1], |e| e.flow.as_ref(), |p| flo::read_flo(p))?;
    let oracle_edges = optional(dir, &manifest.frames, |e| e.oracle_edges.as_ref(), netpbm::read_pgm)?;
    let occluded_boundary = optional(dir, &manifest.frames, |e| e.occluded_boundary.as_ref(), netpbm::read_pgm)?;
    if let Some(flows) = &flows {
        for (k, v) in flows.iter().enumerate() {
            v.ensure_same_dims(dims, "flow").map_err(|e| e.in_frame(k))?;
        }
    }
    for maps in [&oracle_edges, &occluded_boundary].into_iter().flatten() {
        for (k, m) in maps.iter().enumerate() {
            m.ensure_same_dims(dims, "edge map").map_err(|e| e.in_frame(k))?;
        }
    }
    if let Some(clean) = &clean {
        for (k, c) in clean.iter().enumerate() {
            if c.dims() != dims {
                return Err(Error::shape("clean rgb", dims, c.dims()).in_frame(k));
            }
        }
    }
    Ok(Sequence {
        manifest,
        frames,
        clean,
        flows,
        oracle_edges,
        occluded_boundary,
    })
}

/// Writes a rendered sequence with all its ground truth. The manifest is
/// written last.
pub fn write_synth_sequence(dir: &Path, spec: &SceneSpec, truth: &[FrameTruth]) -> Result<SequenceManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(truth.len());
    for t in truth {
        let i = t.index;
        let name = |kind: &str, ext: &str| frame_file(i, kind, ext);
        let at = |e: Error| e.in_frame(i);
        let file = |n: &String| -> PathBuf { dir.join(n) };
        let entry = FrameEntry {
            index: i,
            rgb: name("rgb", "ppm"),
            depth: name("depth", "pfm"),
            clean: Some(name("clean", "ppm")),
            flow: (i + 1 < truth.len()).then(|| flow_file(i)),
            oracle_edges: Some(name("edges", "pgm")),
            occluded_boundary: Some(name("occluded", "pgm")),
            occlusion_free: t.occlusion_free,
            occlusion_rate: t.occlusion_rate,
        };
        netpbm::write_ppm(&file(&entry.rgb), &t.rgb).map_err(at)?;
        netpbm::write_pfm(&file(&entry.depth), &t.depth).map_err(at)?;
        netpbm::write_ppm(&file(entry.clean.as_ref().expect("set above")), &t.clean).map_err(at)?;
        if let Some(f) = &entry.flow {
            flo::write_flo(&file(f), &t.flow_to_next).map_err(at)?;
        }
        netpbm::write_pgm(&file(entry.oracle_edges.as_ref().expect("set above")), &t.oracle_edges).map_err(at)?;
        netpbm::write_pgm(&file(entry.occluded_boundary.as_ref().expect("set above")), &t.occluded_boundary)
            .map_err(at)?;
        entries.push(entry);
    }
    let manifest = SequenceManifest {
        version: SEQUENCE_VERSION.into(),
        frame_count: entries.len(),
        frames: entries,
        spec: Some(spec.clone()),
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(i: usize) -> FrameEntry {
        FrameEntry {
            index: i,
            rgb: frame_file(i, "rgb", "ppm"),
            depth: frame_file(i, "depth", "pfm"),
            clean: None,
            flow: None,
            oracle_edges: None,
            occluded_boundary: None,
            occlusion_free: true,
            occlusion_rate: 0.0,
        }
    }

    #[test]
    fn manifest_validation() {
        let p = Path::new("manifest.json");
        let mut m = SequenceManifest {
            version: SEQUENCE_VERSION.into(),
            frame_count: 3,
            frames: (0..3).map(entry).collect(),
            spec: None,
        };
        m.validate(p).unwrap();
        m.frames[2].index = 5;
        assert!(m.validate(p).is_err());
        m.frames[2].index = 2;
        m.frames[0].flow = Some(flow_file(0));
        assert!(m.validate(p).is_err());
        m.frames[1].flow = Some(flow_file(1));
        m.validate(p).unwrap();
        m.frame_count = 4;
        assert!(m.validate(p).is_err());
        m.frame_count = 3;
        m.version = "other/2".into();
        assert!(m.validate(p).is_err());
    }

    #[test]
    fn unknown_manifest_keys_are_rejected() {
        let text = r#"{"version": "flowdepth-sequence/1", "frame_count": 0, "frames": [], "extra": 1}"#;
        let err = serde_json::from_str::<SequenceManifest>(text).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }
}

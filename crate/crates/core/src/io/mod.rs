//! File formats, sequence directories and run configuration.

mod config;
mod flo;
mod netpbm;
mod sequence;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use config::{load_run_config, parse_run_config, MetricsConfig, RunConfig, TrainSettings};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use netpbm::{
    decode_pfm, decode_pgm, decode_ppm, encode_pfm, encode_pgm, encode_ppm, read_pfm, read_pgm, read_ppm, write_pfm,
    write_pgm, write_ppm,
};
pub use sequence::{
    edge_file, flow_file, frame_file, read_manifest, read_sequence, write_manifest, write_synth_sequence, FrameEntry,
    Sequence, SequenceManifest, MANIFEST_FILE, SEQUENCE_VERSION,
};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Deserializes a JSON document; syntax and schema errors carry the byte
/// offset serde reports.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: json_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn json_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut l = 1;
    for (i, b) in bytes.iter().enumerate() {
        if l == line {
            return (i + column.saturating_sub(1)).min(bytes.len());
        }
        if *b == b'\n' {
            l += 1;
        }
    }
    bytes.len()
}

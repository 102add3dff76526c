//! Middlebury `.flo` optical flow files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::scalar::Real;

use super::{read_bytes, write_bytes};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn encode_flo<T: Real>(v: &FlowField<T>) -> Vec<u8> {
    let (w, h) = v.dims();
    let mut out = Vec::with_capacity(12 + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for [dx, dy] in v.vectors() {
        out.extend_from_slice(&(dx.to_f64_lossy() as f32).to_le_bytes());
        out.extend_from_slice(&(dy.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

fn word(bytes: &[u8], at: usize) -> [u8; 4] {
    [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
}

pub fn decode_flo<T: Real>(bytes: &[u8], path: &Path) -> Result<FlowField<T>> {
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 12 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len(),
            message: "truncated flow header".into(),
        });
    }
    let magic = f32::from_le_bytes(word(bytes, 0));
    if magic != FLO_MAGIC {
        return Err(format(format!("bad flow magic {magic}, expected {FLO_MAGIC}")));
    }
    let w = i32::from_le_bytes(word(bytes, 4));
    let h = i32::from_le_bytes(word(bytes, 8));
    if w <= 0 || h <= 0 {
        return Err(format(format!("invalid flow dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let want = 12 + w * h * 8;
    if bytes.len() != want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len().min(want),
            message: format!("flow payload should end at byte {want}, file has {}", bytes.len()),
        });
    }
    let vectors = bytes[12..]
        .chunks_exact(8)
        .map(|c| {
            [
                T::lit(f32::from_le_bytes(word(c, 0)) as f64),
                T::lit(f32::from_le_bytes(word(c, 4)) as f64),
            ]
        })
        .collect();
    FlowField::new(w, h, vectors)
}

pub fn write_flo<T: Real>(path: &Path, v: &FlowField<T>) -> Result<()> {
    write_bytes(path, &encode_flo(v))
}

pub fn read_flo<T: Real>(path: &Path) -> Result<FlowField<T>> {
    decode_flo(&read_bytes(path)?, path)
}

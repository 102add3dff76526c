//! Binary graymaps (edge maps), pixmaps (RGB) and float maps (depth).

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Mask, RgbImage, ScalarGrid};
use crate::scalar::Real;

use super::{read_bytes, write_bytes};

/// Header tokens and the offset of the first payload byte.
struct Header {
    tokens: Vec<(String, usize)>,
    payload: usize,
}

/// Reads `count` whitespace-separated header tokens after the magic,
/// skipping `#` comments. Exactly one whitespace byte separates the last
/// token from the payload.
fn header(bytes: &[u8], count: usize, path: &Path) -> Result<Header> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(count);
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse(path, pos, "truncated header"));
        }
        tokens.push((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start));
    }
    if pos >= bytes.len() {
        return Err(parse(path, pos, "missing payload"));
    }
    Ok(Header { tokens, payload: pos + 1 })
}

fn parse(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn number(tok: &(String, usize), what: &str, path: &Path) -> Result<usize> {
    tok.0
        .parse()
        .map_err(|_| parse(path, tok.1, format!("invalid {what} {:?}", tok.0)))
}

fn dims(h: &Header, path: &Path) -> Result<(usize, usize)> {
    let w = number(&h.tokens[1], "width", path)?;
    let ht = number(&h.tokens[2], "height", path)?;
    if w == 0 || ht == 0 {
        return Err(parse(path, h.tokens[1].1, "zero-sized raster"));
    }
    Ok((w, ht))
}

fn expect_magic(h: &Header, magic: &str, path: &Path) -> Result<()> {
    if h.tokens[0].0 != magic {
        return Err(parse(path, 0, format!("expected magic {magic}, found {:?}", h.tokens[0].0)));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], h: &Header, len: usize, path: &Path) -> Result<&'a [u8]> {
    let have = bytes.len() - h.payload;
    if have < len {
        return Err(parse(
            path,
            bytes.len(),
            format!("truncated payload: expected {len} bytes, found {have}"),
        ));
    }
    if have > len {
        return Err(parse(path, h.payload + len, format!("{} trailing bytes", have - len)));
    }
    Ok(&bytes[h.payload..])
}

/// `P5` graymap, 0 for clear and 255 for set pixels.
pub fn encode_pgm(m: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width(), m.height()).into_bytes();
    out.extend(m.bits().iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Mask> {
    let h = header(bytes, 4, path)?;
    expect_magic(&h, "P5", path)?;
    let (w, ht) = dims(&h, path)?;
    if number(&h.tokens[3], "maxval", path)? != 255 {
        return Err(parse(path, h.tokens[3].1, "edge maps need maxval 255"));
    }
    let data = payload(bytes, &h, w * ht, path)?;
    let bits = data
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(false),
            255 => Ok(true),
            v => Err(parse(path, h.payload + i, format!("edge value {v} is neither 0 nor 255"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::from_bits(w, ht, bits)
}

fn quantize<T: Real>(v: T) -> u8 {
    let f = v.to_f64_lossy();
    if f.is_nan() {
        0
    } else {
        (f.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// `P6` pixmap, 8 bits per channel. Values are clamped to `[0, 1]` and
/// rounded to the nearest of 256 levels.
pub fn encode_ppm<T: Real>(img: &RgbImage<T>) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in &img.channels {
                out.push(quantize(c.get(x, y)));
            }
        }
    }
    out
}

pub fn decode_ppm<T: Real>(bytes: &[u8], path: &Path) -> Result<RgbImage<T>> {
    let h = header(bytes, 4, path)?;
    expect_magic(&h, "P6", path)?;
    let (w, ht) = dims(&h, path)?;
    if number(&h.tokens[3], "maxval", path)? != 255 {
        return Err(parse(path, h.tokens[3].1, "only 8-bit pixmaps are supported"));
    }
    let data = payload(bytes, &h, w * ht * 3, path)?;
    let ch = |c: usize| ScalarGrid::from_fn(w, ht, |x, y| T::lit(data[(y * w + x) * 3 + c] as f64 / 255.0));
    RgbImage::new(ch(0), ch(1), ch(2))
}

/// `Pf` float map, little-endian (scale -1), rows stored bottom to top as
/// in the format's definition. Values are written as `f32`.
pub fn encode_pfm<T: Real>(g: &ScalarGrid<T>) -> Vec<u8> {
    let (w, h) = g.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(g.get(x, y).to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm<T: Real>(bytes: &[u8], path: &Path) -> Result<ScalarGrid<T>> {
    let h = header(bytes, 4, path)?;
    expect_magic(&h, "Pf", path)?;
    let (w, ht) = dims(&h, path)?;
    let scale: f64 = h.tokens[3]
        .0
        .parse()
        .map_err(|_| parse(path, h.tokens[3].1, format!("invalid scale {:?}", h.tokens[3].0)))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(parse(path, h.tokens[3].1, "scale must be a non-zero number"));
    }
    let data = payload(bytes, &h, w * ht * 4, path)?;
    let mut values = vec![T::zero(); w * ht];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, x) = (k / w, k % w);
        values[(ht - 1 - row) * w + x] = T::lit(v as f64);
    }
    ScalarGrid::new(w, ht, values)
}

pub fn write_pgm(path: &Path, m: &Mask) -> Result<()> {
    write_bytes(path, &encode_pgm(m))
}

pub fn read_pgm(path: &Path) -> Result<Mask> {
    decode_pgm(&read_bytes(path)?, path)
}

pub fn write_ppm<T: Real>(path: &Path, img: &RgbImage<T>) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

pub fn read_ppm<T: Real>(path: &Path) -> Result<RgbImage<T>> {
    decode_ppm(&read_bytes(path)?, path)
}

pub fn write_pfm<T: Real>(path: &Path, g: &ScalarGrid<T>) -> Result<()> {
    write_bytes(path, &encode_pfm(g))
}

pub fn read_pfm<T: Real>(path: &Path) -> Result<ScalarGrid<T>> {
    decode_pfm(&read_bytes(path)?, path)
}

//! Binary PPM (P6) and PGM (P5) rasters, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded 8-bit raster; `channels` is 1 (PGM) or 3 (PPM), samples interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    /// Splits interleaved samples into per-channel planes.
    pub fn planes(&self) -> Vec<Vec<u8>> {
        (0..self.channels)
            .map(|c| self.data.iter().skip(c).step_by(self.channels).copied().collect())
            .collect()
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("empty file")?;
    let channels = match magic {
        b"P6" => 3,
        b"P5" => 1,
        other => return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(other))),
    };
    let mut field = |name: &str| -> std::result::Result<usize, String> {
        let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(format!("bad {name}"))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (need 255)"));
    }
    if width == 0 || height == 0 {
        return Err("zero-sized raster".into());
    }
    // exactly one whitespace byte separates the header from the samples
    pos += 1;
    let n = width * height * channels;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| format!("truncated data: need {n} bytes"))?
        .to_vec();
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.data);
    out
}

pub fn read(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::Raster {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn write(path: &Path, r: &Raster) -> Result<()> {
    fs::write(path, encode(r)).map_err(|e| Error::io(path, e))
}

/// Maps a [0,1] value to a byte with round-to-nearest.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

//! Binary PPM (`P6`) and PGM (`P5`) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit image with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

fn magic(channels: usize) -> &'static str {
    if channels == 3 {
        "P6"
    } else {
        "P5"
    }
}

/// Serializes a raster; 3 channels become `P6`, 1 channel `P5`.
pub fn encode(r: &Raster) -> Vec<u8> {
    let mut out = format!("{}\n{} {}\n255\n", magic(r.channels), r.width, r.height).into_bytes();
    out.extend_from_slice(&r.data);
    out
}

pub fn write(path: &Path, r: &Raster) -> Result<()> {
    assert!(
        r.channels == 1 || r.channels == 3,
        "PNM rasters have 1 or 3 channels"
    );
    assert_eq!(r.data.len(), r.width * r.height * r.channels, "raster size");
    fs::write(path, encode(r)).map_err(Error::io(path))
}

/// Reads a `P6` (`channels = 3`) or `P5` (`channels = 1`) file.
pub fn read(path: &Path, channels: usize) -> Result<Raster> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(path, &bytes, channels)
}

pub fn decode(path: &Path, bytes: &[u8], channels: usize) -> Result<Raster> {
    let header = |msg: String| Error::Header {
        path: path.to_path_buf(),
        msg,
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
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
            return Err(header("header ends early".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let want = magic(channels);
    if fields[0] != want {
        return Err(header(format!(
            "magic number {:?}, expected {want}",
            fields[0]
        )));
    }
    let number = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| header(format!("invalid {what} {s:?}")))
    };
    let width = number(&fields[1], "width")?;
    let height = number(&fields[2], "height")?;
    if number(&fields[3], "maxval")? != 255 {
        return Err(header(format!("maxval {}, expected 255", fields[3])));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(header("no separator after maxval".into()));
    }
    pos += 1;
    let expected = width * height * channels;
    let found = bytes.len() - pos;
    if found < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(header(format!(
            "{} trailing bytes after the payload",
            found - expected
        )));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: bytes[pos..].to_vec(),
    })
}

/// `round(255·v)` of a value clamped to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

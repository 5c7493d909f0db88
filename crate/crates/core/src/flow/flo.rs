//! Middlebury `.flo` files: `"PIEH"`, width and height as little-endian `i32`, then
//! row-major interleaved `(dx, dy)` as little-endian `f32`.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};
use crate::raster::Mask;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.vectors().len() * 8);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for &[dx, dy] in flow.vectors() {
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    out
}

/// Parses `.flo` bytes. The format has no validity channel, so every pixel is valid.
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 || &bytes[..4] != FLO_MAGIC {
        return Err(Error::Format("missing PIEH magic in .flo data".into()));
    }
    let dim = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (w, h) = (dim(4), dim(8));
    if w < 0 || h < 0 {
        return Err(Error::Format(format!("negative .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format("oversized .flo dimensions".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            ".flo payload for {w}x{h} should be {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let vectors = bytes[12..]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            ]
        })
        .collect();
    FlowField::from_vectors(w, h, vectors, Mask::new(w, h, true))
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

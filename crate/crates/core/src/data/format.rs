//! `IGHM` heatmap files: the magic `IGHM`, then `rows` and `cols` as
//! little-endian `u32`, then `rows * cols` little-endian `f32` values in
//! row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use super::heatmap::AttentionMap;
use crate::error::{IaError, Result};
use crate::scalar::Scalar;

pub const IGHM_MAGIC: &[u8; 4] = b"IGHM";

pub fn encode_ighm<T: Scalar>(map: &AttentionMap<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * map.values().len());
    out.extend_from_slice(IGHM_MAGIC);
    out.extend_from_slice(&(map.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(map.cols() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn decode_ighm<T: Scalar>(bytes: &[u8]) -> Result<AttentionMap<T>> {
    if bytes.len() < 12 || &bytes[..4] != IGHM_MAGIC {
        return Err(IaError::Format("missing IGHM header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(IaError::Format(format!(
            "{rows}x{cols} map needs {} payload bytes, found {}",
            rows * cols * 4,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
        .collect();
    AttentionMap::new(rows, cols, values).map_err(|e| IaError::Format(e.to_string()))
}

pub fn write_ighm<T: Scalar>(path: impl AsRef<Path>, map: &AttentionMap<T>) -> Result<()> {
    fs::write(path, encode_ighm(map))?;
    Ok(())
}

pub fn read_ighm<T: Scalar>(path: impl AsRef<Path>) -> Result<AttentionMap<T>> {
    decode_ighm(&fs::read(path)?)
}

/// 8-bit grayscale rendering: value x 255, rounded and clamped.
pub fn to_gray_image<T: Scalar>(map: &AttentionMap<T>) -> GrayImage {
    GrayImage::from_fn(map.cols() as u32, map.rows() as u32, |x, y| {
        let v = map.get(y as usize, x as usize).to_f64_lossy() * 255.0;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

pub fn encode_png<T: Scalar>(map: &AttentionMap<T>) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_gray_image(map).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn write_png<T: Scalar>(path: impl AsRef<Path>, map: &AttentionMap<T>) -> Result<()> {
    fs::write(path, encode_png(map)?)?;
    Ok(())
}

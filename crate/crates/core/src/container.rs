//! Binary tensor container used for latent codes, plus atomic file writes.
//!
//! Layout: 16-byte magic, `u32` rank, `rank` × `u32` dims, then the values as
//! little-endian `f32`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 16] = b"SPLTOK_LATENT_V1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let body = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Parse("not a latent container (bad magic)".into()))?;
    let mut words = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()));
    let rank = words.next().ok_or(Error::TruncatedPayload { expected: 4, found: body.len() })? as usize;
    if body.len() < 4 * (1 + rank) {
        return Err(Error::TruncatedPayload { expected: 4 * (1 + rank), found: body.len() });
    }
    let shape: Vec<usize> = words.by_ref().take(rank).map(|d| d as usize).collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Parse("container shape overflows".into()))?;
    let payload = &body[4 * (1 + rank)..];
    if payload.len() != 4 * count {
        return Err(Error::TruncatedPayload { expected: 4 * count, found: payload.len() });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

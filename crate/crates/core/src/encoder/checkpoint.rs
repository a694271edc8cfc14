//! Checkpoint layout: `b"CFP1"`, `u32` d, `u32` d_out, `f64` temperature,
//! then `w_v`, `b_v`, `w_c`, `b_c` as little-endian `f32`, row-major.

use std::fs;
use std::path::Path;

use super::EncoderParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CFP1";

pub fn write_checkpoint(path: &Path, p: &EncoderParams) -> Result<()> {
    let (d, d_out) = (p.input_dim(), p.output_dim());
    let mut buf = Vec::with_capacity(20 + 4 * (2 * d_out * d + 2 * d_out));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(d_out as u32).to_le_bytes());
    buf.extend_from_slice(&p.temperature.to_le_bytes());
    for block in p.blocks() {
        for x in block {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = fs::read(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 20 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic bytes (expected CFP1)".into()));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d_out = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let temperature = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = 4 * (2 * d_out * d + 2 * d_out);
    if bytes.len() - 20 != expected {
        return Err(bad(format!(
            "expected {expected} parameter bytes for d={d}, d_out={d_out}, found {}",
            bytes.len() - 20
        )));
    }
    let mut floats = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let p = EncoderParams {
        w_v: Matrix::from_vec(d_out, d, take(d_out * d)),
        b_v: take(d_out),
        w_c: Matrix::from_vec(d_out, d, take(d_out * d)),
        b_c: take(d_out),
        temperature,
    };
    if !p.is_finite() {
        return Err(bad("non-finite parameters or non-positive temperature".into()));
    }
    Ok(p)
}

//! Binary checkpoint format.
//!
//! ```text
//! "AQRS"            4-byte magic
//! version           u32 LE (currently 1)
//! tensor count      u32 LE (10: kernels then bias for conv1, conv2 3×3,
//!                   conv2 5×5, conv2 7×7, conv3)
//! per tensor:
//!   ndim            u32 LE
//!   dims            ndim × u32 LE
//!   values          f64 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use super::model::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AQRS";
pub const FORMAT_VERSION: u32 = 1;

fn expected_shapes(params: &ModelParams) -> Vec<Vec<usize>> {
    params
        .layers()
        .iter()
        .flat_map(|l| [l.kernels.shape().to_vec(), vec![l.bias.len()]])
        .collect()
}

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let shapes = expected_shapes(params);
    let mut out = Vec::with_capacity(16 + params.num_params() * 8 + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (shape, values) in shapes.iter().zip(params.slices()) {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedCheckpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::MalformedCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::MalformedCheckpoint(format!("unsupported version {version}")));
    }
    let mut params = ModelParams::zeros();
    let shapes = expected_shapes(&params);
    let count = r.u32()? as usize;
    if count != shapes.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint holds {count} tensors, model has {}",
            shapes.len()
        )));
    }
    for (expected, slot) in shapes.iter().zip(params.slices_mut()) {
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(Error::MalformedCheckpoint(format!("implausible rank {ndim}")));
        }
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor shape {dims:?}, expected {expected:?}"
            )));
        }
        for v in slot.iter_mut() {
            *v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::MalformedCheckpoint("non-finite parameter".into()));
            }
        }
    }
    if r.at != bytes.len() {
        return Err(Error::MalformedCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.at
        )));
    }
    Ok(params)
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_params(&fs::read(path)?)
}

//! Weight file format (all integers little-endian):
//!
//! ```text
//! "TABFORGE"                 8 bytes magic
//! format_version             u32 (= 1)
//! tensor_count               u32
//! tensor_count × {
//!     name_len               u16
//!     name                   UTF-8, name_len bytes
//!     ndim                   u8
//!     dims                   ndim × u32
//!     offset                 u64, byte offset into the data section
//! }
//! data_len                   u64, byte length of the data section
//! data                       f32 values, row-major, tensor after tensor
//! ```

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use super::network::{ModelWeights, NamedTensor, NetworkSpec};
use super::Real;

pub const MAGIC: &[u8; 8] = b"TABFORGE";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight format version {0} (expected 1)")]
    Version(u32),
    #[error("truncated weight file at byte offset {0}")]
    Truncated(usize),
    #[error("layer {layer}: shape {found:?}, expected {expected:?}")]
    Shape {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unexpected layer {found} (expected {expected})")]
    Layer { expected: String, found: String },
    #[error("malformed layer table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_weights<F: Real>(weights: &ModelWeights<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&weights.format_version.to_le_bytes());
    out.extend_from_slice(&(weights.tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in &weights.tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.value.ndim() as u8);
        for &d in t.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.value.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for t in &weights.tensors {
        for v in t.value.iter() {
            let v = v.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(WeightsError::Truncated(self.pos));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, WeightsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses and validates a weight file against the fixed layer table.
pub fn read_weights(bytes: &[u8]) -> Result<ModelWeights<f32>, WeightsError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| WeightsError::BadMagic)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = r.u32()?;
    if version != ModelWeights::<f32>::FORMAT_VERSION {
        return Err(WeightsError::Version(version));
    }
    let count = r.u32()? as usize;
    if count != NetworkSpec::PARAMS.len() {
        return Err(WeightsError::Table(format!(
            "{count} tensors, expected {}",
            NetworkSpec::PARAMS.len()
        )));
    }
    let mut table = Vec::with_capacity(count);
    for (expected_name, expected_shape) in NetworkSpec::PARAMS.iter() {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| WeightsError::Table("layer name is not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let offset = r.u64()?;
        if name != *expected_name {
            return Err(WeightsError::Layer {
                expected: expected_name.to_string(),
                found: name,
            });
        }
        if shape != *expected_shape {
            return Err(WeightsError::Shape {
                layer: name,
                expected: expected_shape.to_vec(),
                found: shape,
            });
        }
        table.push((name, shape, offset));
    }
    let data_len = r.u64()? as usize;
    let data_start = r.pos;
    let data = r.take(data_len)?;
    let mut tensors = Vec::with_capacity(count);
    for (name, shape, offset) in table {
        let n: usize = shape.iter().product();
        let start = offset as usize;
        let end = start + 4 * n;
        if end > data.len() {
            return Err(WeightsError::Truncated(data_start + data.len()));
        }
        let values: Vec<f32> = data[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let value = ArrayD::from_shape_vec(IxDyn(&shape), values).expect("shape product checked");
        tensors.push(NamedTensor { name, value });
    }
    Ok(ModelWeights {
        format_version: version,
        tensors,
    })
}

pub fn save_weights<F: Real>(weights: &ModelWeights<F>, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    fs::write(path, write_weights(weights))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights<f32>, WeightsError> {
    read_weights(&fs::read(path)?)
}

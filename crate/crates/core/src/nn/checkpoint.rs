//! Checkpoint file format.
//!
//! ```text
//! "VOLCAST1"                      8 bytes
//! manifest length                 u64 little-endian
//! manifest                        UTF-8 JSON: {"format_version", "meta", "tensors": [{name, rows, cols}]}
//! tensor data                     f64 little-endian, row-major, in manifest order
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Array;

pub const MAGIC: &[u8; 8] = b"VOLCAST1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write<T: Scalar, W: Write>(
    mut w: W,
    meta: serde_json::Value,
    tensors: &[(String, &Array<T>)],
) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta,
        tensors: tensors
            .iter()
            .map(|(name, a)| TensorEntry {
                name: name.clone(),
                rows: a.rows(),
                cols: a.cols(),
            })
            .collect(),
    };
    let text = serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(&text)?;
    let mut buf = Vec::new();
    for (_, a) in tensors {
        for &x in a.data() {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read<T: Scalar, R: Read>(mut r: R) -> Result<(Manifest, Vec<Array<T>>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint("manifest too large".into()));
    }
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let mut arrays = Vec::with_capacity(manifest.tensors.len());
    let mut word = [0u8; 8];
    for entry in &manifest.tensors {
        let mut data = Vec::with_capacity(entry.rows * entry.cols);
        for _ in 0..entry.rows * entry.cols {
            r.read_exact(&mut word).map_err(|_| {
                Error::Checkpoint(format!("truncated data in tensor {}", entry.name))
            })?;
            data.push(T::lit(f64::from_le_bytes(word)));
        }
        arrays.push(Array::new(entry.rows, entry.cols, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    Ok((manifest, arrays))
}

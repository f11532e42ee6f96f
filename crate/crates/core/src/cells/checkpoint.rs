//! Parameter checkpoint file, version 1.
//!
//! ```text
//! bytes 0..8    magic "URGCKPT1"
//! bytes 8..16   header length L, u64 little-endian
//! bytes 16..16+L  UTF-8 JSON header:
//!                 {"version":1,"precision":"f64"|"f32","meta":{..},
//!                  "tensors":[{"name":..,"rows":..,"cols":..},..]}
//! rest          tensor payloads in header order, row-major, little-endian
//!               at the header's precision; nothing may follow
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{Precision, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"URGCKPT1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub precision: Precision,
    /// Free-form description of the model (cell, gate config, sizes).
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    precision: Precision,
    meta: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: 1,
            precision: self.precision,
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorHeader { name: t.name.clone(), rows: t.rows, cols: t.cols })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(Error::shape(
                    "checkpoint tensor",
                    format!("{} values for {}", t.rows * t.cols, t.name),
                    t.data.len(),
                ));
            }
            for &v in &t.data {
                match self.precision {
                    Precision::F64 => v.write_le(&mut out),
                    Precision::F32 => (v as f32).write_le(&mut out),
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: String| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            reason,
        };
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail(0, "not a checkpoint (bad magic)".into()));
        }
        if bytes.len() < 16 {
            return Err(fail(8, "truncated header length".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let end = 16usize.checked_add(len).filter(|&e| e <= bytes.len());
        let Some(end) = end else {
            return Err(fail(16, format!("header of {len} bytes runs past end of file")));
        };
        let header: Header =
            serde_json::from_slice(&bytes[16..end]).map_err(|e| fail(16, format!("bad header: {e}")))?;
        if header.version != 1 {
            return Err(fail(16, format!("unsupported version {}", header.version)));
        }
        let width = header.precision.byte_width();
        let mut at = end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n = th.rows * th.cols;
            let need = n * width;
            if bytes.len() - at < need {
                return Err(fail(at, format!("truncated payload for tensor {}", th.name)));
            }
            let data = bytes[at..at + need]
                .chunks_exact(width)
                .map(|c| match header.precision {
                    Precision::F64 => f64::read_le(c),
                    Precision::F32 => f32::read_le(c) as f64,
                })
                .collect();
            at += need;
            tensors.push(NamedTensor { name: th.name, rows: th.rows, cols: th.cols, data });
        }
        if at != bytes.len() {
            return Err(fail(at, format!("{} trailing bytes", bytes.len() - at)));
        }
        Ok(Checkpoint { precision: header.precision, meta: header.meta, tensors })
    }
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    crate::io::write_atomic(path, &ckpt.to_bytes()?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: Precision) -> Checkpoint {
        Checkpoint {
            precision: p,
            meta: serde_json::json!({"cell": "lstm"}),
            tensors: vec![
                NamedTensor { name: "w".into(), rows: 2, cols: 2, data: vec![1.0, -2.5, 0.125, 3.0] },
                NamedTensor { name: "b".into(), rows: 1, cols: 3, data: vec![0.0, 1.0, -1.0] },
            ],
        }
    }

    #[test]
    fn round_trip_both_precisions() {
        let dir = tempfile::tempdir().unwrap();
        for p in [Precision::F64, Precision::F32] {
            let path = dir.path().join(format!("m-{}.ckpt", p.as_str()));
            let c = sample(p);
            write_checkpoint(&path, &c).unwrap();
            assert_eq!(read_checkpoint(&path).unwrap(), c);
        }
    }

    #[test]
    fn corrupt_files_report_offsets() {
        let path = Path::new("x.ckpt");
        let bytes = sample(Precision::F64).to_bytes().unwrap();
        let err = Checkpoint::from_bytes(path, b"NOTACKPTxxxxxxxx").unwrap_err().to_string();
        assert!(err.contains("bad magic") && err.contains("offset 0"), "{err}");
        let err = Checkpoint::from_bytes(path, &bytes[..bytes.len() - 4]).unwrap_err().to_string();
        assert!(err.contains("truncated payload"), "{err}");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(path, &extra).is_err());
        assert!(read_checkpoint(Path::new("/nonexistent/m.ckpt")).is_err());
    }
}

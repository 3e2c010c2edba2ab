//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "UMMUCKPT"
//! version  u32 LE   currently 1
//! hlen     u64 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON (CheckpointHeader)
//! data     f64 LE, arrays concatenated row-major in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelDims, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UMMUCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: ModelDims,
    pub arrays: Vec<ArrayEntry>,
    /// Free-form echo of the configuration that produced the weights.
    pub config: serde_json::Value,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::IncompatibleCheckpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams, config: serde_json::Value) -> std::io::Result<()> {
    let header = CheckpointHeader {
        dims: params.dims(),
        arrays: params
            .named()
            .map(|(name, t)| ArrayEntry {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
        config,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in params.tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

/// Reads a checkpoint and checks it against `expected` dimensions.
pub fn read_checkpoint<R: Read>(mut r: R, expected: &ModelDims) -> Result<(ModelParams, CheckpointHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("file too short for a checkpoint"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| corrupt("truncated version"))?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| corrupt("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.dims != *expected {
        return Err(corrupt(format!(
            "checkpoint dimensions {:?} do not match configuration {:?}",
            header.dims, expected
        )));
    }
    let mut named = Vec::with_capacity(header.arrays.len());
    for a in &header.arrays {
        let mut buf = vec![0u8; a.rows * a.cols * 8];
        r.read_exact(&mut buf)
            .map_err(|_| corrupt(format!("truncated data for {}", a.name)))?;
        let data = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        named.push((a.name.clone(), Tensor::new(a.rows, a.cols, data)?));
    }
    let params = ModelParams::from_named(header.dims, named)?;
    Ok((params, header))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams, config: serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), params, config).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: &ModelDims) -> Result<(ModelParams, CheckpointHeader)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file), expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn dims(e: usize) -> ModelDims {
        ModelDims {
            embed_dim: e,
            feature_dim: 3,
            time_dim: 2,
        }
    }

    #[test]
    fn round_trip() {
        let p = ModelParams::init(dims(4), &mut Rng::from_seed(5));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, serde_json::json!({"seed": 5})).unwrap();
        let (q, h) = read_checkpoint(buf.as_slice(), &dims(4)).unwrap();
        assert_eq!(p, q);
        assert_eq!(h.config["seed"], 5);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let p = ModelParams::zeros(dims(4));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, serde_json::Value::Null).unwrap();
        let err = read_checkpoint(buf.as_slice(), &dims(5)).unwrap_err();
        assert!(matches!(err, Error::IncompatibleCheckpoint(_)));
        let err = read_checkpoint(&buf[..buf.len() - 3], &dims(4)).unwrap_err();
        assert!(matches!(err, Error::IncompatibleCheckpoint(_)));
        assert!(read_checkpoint(&b"NOTACKPT"[..], &dims(4)).is_err());
    }
}

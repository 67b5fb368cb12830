//! Parameter checkpoints: a flat, versioned binary blob of
//! `(shape table, contiguous f64 payload)`, plus JSON metadata on the side.
//!
//! The same encoding doubles as the wire format for measuring client/server
//! message sizes, so communication-cost metrics reflect real payload bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"FKDC";
const VERSION: u32 = 1;

/// Serialize tensors to the blob format: magic, version, tensor count, a
/// shape table (rank then extents, little-endian u32), then all payloads as
/// little-endian f64 in order.
pub fn serialize_tensors(tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
    }
    for t in tensors {
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse a blob back into tensors; bit-exact inverse of
/// [`serialize_tensors`].
pub fn parse_tensors(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if bytes.len() < *cursor + n {
            return Err(Error::Checkpoint(format!(
                "blob truncated at byte {} (need {n} more)",
                *cursor
            )));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let read_u32 = |cursor: &mut usize| -> Result<u32> {
        let s = take(cursor, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut cursor)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut cursor)? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = read_u32(&mut cursor)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut cursor)? as usize);
        }
        shapes.push(shape);
    }
    let mut tensors = Vec::with_capacity(count);
    for shape in shapes {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let s = take(&mut cursor, 8)?;
            data.push(f64::from_le_bytes([
                s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7],
            ]));
        }
        // Bypass the finiteness check: checkpoints must round-trip any bit
        // pattern they were given.
        let mut t = Tensor::zeros(&shape);
        t.data_mut().copy_from_slice(&data);
        tensors.push(t);
    }
    if cursor != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "trailing {} bytes after payload",
            bytes.len() - cursor
        )));
    }
    Ok(tensors)
}

/// Sidecar metadata describing what a blob contains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub dims: Vec<Vec<usize>>,
    pub activations: Vec<String>,
    pub seed: u64,
}

pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    tensors: &[&Tensor],
    meta: &CheckpointMeta,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize_tensors(tensors))?;
    let meta_path = path.with_extension("json");
    fs::write(meta_path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Vec<Tensor>> {
    parse_tensors(&fs::read(path)?)
}

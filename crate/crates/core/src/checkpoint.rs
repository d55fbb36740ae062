//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | content                                 |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `AWLCKPT\0`                       |
//! | 8      | 4    | format version (`u32`, currently 1)     |
//! | 12     | 4    | model code (`u32`: 1 ising, 2 imageseg, 3 ergm) |
//! | 16     | 8    | payload length in bytes (`u64`)         |
//! | 24     | n    | bincode-encoded experiment state        |
//!
//! Files are written to a sibling temporary path and renamed into place, so
//! a crash never leaves a truncated checkpoint behind.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AWLCKPT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode<T: Serialize>(model_code: u32, value: &T) -> Result<Vec<u8>> {
    let payload = bincode::serialize(value).map_err(|e| Error::Checkpoint(format!("encode: {e}")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model_code.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Validates the header and returns the model code and payload.
pub fn split_header(bytes: &[u8]) -> Result<(u32, &[u8])> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(8);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let code = word(12);
    let len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, header says {len}",
            payload.len()
        )));
    }
    Ok((code, payload))
}

pub fn decode_payload<T: DeserializeOwned>(payload: &[u8]) -> Result<T> {
    bincode::deserialize(payload).map_err(|e| Error::Checkpoint(format!("decode: {e}")))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

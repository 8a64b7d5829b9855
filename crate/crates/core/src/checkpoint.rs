//! Checkpoint container shared by the projection and bundle formats.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"LBCK" | u32 header_len | header (UTF-8 JSON) | f32 payload ...
//! ```
//!
//! Header offsets into the payload are in f32 elements, counted from the
//! first payload byte.

use serde::de::DeserializeOwned;
use serde::Serialize;

const MAGIC: &[u8; 4] = b"LBCK";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(String),
}

pub fn encode<H: Serialize>(header: &H, payload: &[f64]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + payload.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    crate::io::push_f32_le(&mut out, payload);
    out
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>), CheckpointError> {
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let header_end = 8usize.checked_add(len).ok_or(CheckpointError::Truncated)?;
    let header_bytes = bytes.get(8..header_end).ok_or(CheckpointError::Truncated)?;
    let header = serde_json::from_slice(header_bytes).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let rest = &bytes[header_end..];
    if !rest.len().is_multiple_of(4) {
        return Err(CheckpointError::Truncated);
    }
    let payload = crate::io::f32_le_at(rest, 0, rest.len() / 4).ok_or(CheckpointError::Truncated)?;
    Ok((header, payload))
}

//! Binary label vectors: magic `CDNLBL01`, the count as a little-endian
//! u64, then one little-endian u32 per row.

use super::ClusterError;

const MAGIC: &[u8; 8] = b"CDNLBL01";

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + labels.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>, ClusterError> {
    let err = |m: &str| ClusterError::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err("bad header"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if (body.len() as u64) != n.saturating_mul(4) {
        return Err(err("length does not match header"));
    }
    Ok(body
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect())
}

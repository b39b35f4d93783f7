//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "BIVOCKPT"
//! version  u32      currently 1
//! desc_len u32      length of the JSON descriptor
//! desc     bytes    arbitrary JSON (architecture, training config, ...)
//! count    u64      number of f64 parameters
//! params   count * 8 bytes, f64 LE
//! checksum u64      FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::NnError;

const MAGIC: &[u8; 8] = b"BIVOCKPT";
const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn save_checkpoint(path: &Path, descriptor: &serde_json::Value, params: &[f64]) -> Result<(), NnError> {
    let desc = serde_json::to_vec(descriptor).expect("JSON value serializes");
    let mut buf = Vec::with_capacity(24 + desc.len() + params.len() * 8 + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    buf.extend_from_slice(&desc);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let checksum = fnv1a(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(serde_json::Value, Vec<f64>), NnError> {
    let buf = fs::read(path)?;
    let need = |n: usize, what: &str| -> Result<(), NnError> {
        if buf.len() < n {
            Err(NnError::Corrupt(format!("truncated before {what}")))
        } else {
            Ok(())
        }
    };
    need(8 + 4 + 4, "descriptor length")?;
    if &buf[..8] != MAGIC {
        return Err(NnError::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::Corrupt(format!("unsupported version {version}")));
    }
    let desc_len = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let desc_end = 16 + desc_len;
    need(desc_end + 8, "parameter count")?;
    let descriptor: serde_json::Value = serde_json::from_slice(&buf[16..desc_end])
        .map_err(|e| NnError::Corrupt(format!("descriptor is not JSON: {e}")))?;
    let count = u64::from_le_bytes(buf[desc_end..desc_end + 8].try_into().unwrap()) as usize;
    let params_end = desc_end + 8 + count * 8;
    need(params_end + 8, "checksum")?;
    if buf.len() != params_end + 8 {
        return Err(NnError::Corrupt("trailing garbage after checksum".into()));
    }
    let stored = u64::from_le_bytes(buf[params_end..params_end + 8].try_into().unwrap());
    let computed = fnv1a(&buf[..params_end]);
    if stored != computed {
        return Err(NnError::Corrupt(format!(
            "checksum mismatch: stored {stored:#x}, computed {computed:#x}"
        )));
    }
    let mut params = Vec::with_capacity(count);
    for chunk in buf[desc_end + 8..params_end].chunks_exact(8) {
        params.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((descriptor, params))
}

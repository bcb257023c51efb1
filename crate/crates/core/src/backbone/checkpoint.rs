//! Binary embedding checkpoints.
//!
//! Layout (little-endian): magic `RLMC`, version `u32`, `d_e u32`, `I u32`,
//! `J u32`, then `(I + J + 1) * d_e` `f32` values row-major, users first,
//! items next, the mask token last. The id maps are written next to the
//! binary as `<file>.ids.json`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use super::EmbeddingTable;
use crate::corpus::IdMaps;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RLMC";
pub const VERSION: u32 = 1;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".ids.json");
    path.with_file_name(name)
}

pub fn encode_bytes(table: &EmbeddingTable) -> Vec<u8> {
    let d = table.dim();
    let mut out = Vec::with_capacity(20 + (table.n_nodes() + 1) * d * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, d as u32, table.n_users as u32, table.n_items as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &w in table.weights.iter().chain(table.mask_token.iter()) {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

pub fn decode_bytes(mut bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut magic = [0u8; 4];
    bytes
        .read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut header = [0u32; 4];
    for h in &mut header {
        let mut buf = [0u8; 4];
        bytes
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        *h = u32::from_le_bytes(buf);
    }
    let [version, d, nu, ni] = header.map(|h| h as usize);
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let expected = (nu + ni + 1) * d * 4;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let split = (nu + ni) * d;
    let weights = Array2::from_shape_vec((nu + ni, d), values[..split].to_vec())
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(EmbeddingTable {
        n_users: nu,
        n_items: ni,
        weights,
        mask_token: Array1::from(values[split..].to_vec()),
    })
}

pub fn save(path: &Path, table: &EmbeddingTable, ids: &IdMaps) -> Result<()> {
    if ids.users.len() != table.n_users || ids.items.len() != table.n_items {
        return Err(Error::Checkpoint("id maps do not match table shape".into()));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_bytes(table))
        .map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string(ids)?).map_err(|e| Error::io(&side, e))
}

pub fn load(path: &Path) -> Result<(EmbeddingTable, IdMaps)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let table = decode_bytes(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let ids: IdMaps = serde_json::from_str(&text)?;
    if ids.users.len() != table.n_users || ids.items.len() != table.n_items {
        return Err(Error::Checkpoint(format!(
            "{} does not match the table shape",
            side.display()
        )));
    }
    Ok((table, ids))
}

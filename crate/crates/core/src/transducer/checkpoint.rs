//! Binary parameter container shared by transducer and language-ID checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "RNTM" | version: u32 | entries: u32
//! per entry: name_len: u32 | name bytes | rank: u32 | dims: u64 × rank | values: f64 × numel
//! "META" | meta_len: u64 | meta JSON {"kind", "frozen", "payload"}
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RNTM";
pub const CHECKPOINT_VERSION: u32 = 1;
const META_MAGIC: &[u8; 4] = b"META";

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    frozen: Vec<String>,
    payload: serde_json::Value,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "checkpoint",
        reason: reason.into(),
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    store: &ParamStore,
    kind: &str,
    payload: serde_json::Value,
) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for &d in &p.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let meta = Meta {
        kind: kind.to_string(),
        frozen: store
            .iter()
            .filter(|(_, p)| p.frozen)
            .map(|(_, p)| p.name.clone())
            .collect(),
        payload,
    };
    let json = serde_json::to_vec(&meta)?;
    w.write_all(META_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| bad(format!("truncated: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

/// Returns the store (frozen flags restored), the checkpoint kind and its payload.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamStore, String, serde_json::Value)> {
    if &read_array::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| bad(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| bad("parameter name is not utf-8"))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let values = (0..numel)
            .map(|_| read_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        store.add(&name, &shape, values).map_err(|e| bad(e.to_string()))?;
    }
    if &read_array::<4, _>(&mut r)? != META_MAGIC {
        return Err(bad("missing metadata block"));
    }
    let len = read_u64(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| bad(format!("truncated metadata: {e}")))?;
    let meta: Meta = serde_json::from_slice(&json).map_err(|e| bad(format!("metadata: {e}")))?;
    for name in &meta.frozen {
        let id = store
            .id(name)
            .ok_or_else(|| bad(format!("frozen flag for unknown parameter {name}")))?;
        store.set_frozen(id, true);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after metadata"));
    }
    Ok((store, meta.kind, meta.payload))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, kind: &str, payload: serde_json::Value) -> Result<()> {
    let f = File::create(path)?;
    write_checkpoint(BufWriter::new(f), store, kind, payload)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, String, serde_json::Value)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

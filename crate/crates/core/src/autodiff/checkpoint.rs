//! Parameter archives.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "C4MCKPT1"
//! count   u32
//! repeat count times:
//!   name_len u32, name utf-8 bytes
//!   rank     u32, dims u64 × rank
//!   payload  f64 × product(dims)
//! ```
//!
//! A JSON manifest sits beside the archive (`<path>.json`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"C4MCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config_hash: String,
    pub epoch: usize,
    pub seed: u64,
    /// ChaCha word position of the training RNG when the snapshot was taken.
    pub rng_word_pos: u128,
    /// Resolved run configuration as flat key/value pairs.
    pub config: Vec<(String, String)>,
}

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.total_size() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn decode_params(bytes: &[u8]) -> Option<ParamStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return None;
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).ok()?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Option<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
        store.register(name, Tensor::new(shape, data).ok()?);
    }
    (r.pos == bytes.len()).then_some(store)
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, manifest: &CheckpointManifest) -> Result<()> {
    fs::write(path, encode_params(store)).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointManifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = decode_params(&bytes).ok_or_else(|| Error::Format {
        path: path.display().to_string(),
        msg: "malformed parameter archive".into(),
    })?;
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: mpath.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok((store, manifest))
}

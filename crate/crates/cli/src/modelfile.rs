//! `model.bin`: a versioned flat parameter dump.
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `GAMD` |
//! | 4 | format version, u32 LE |
//! | 32 | SHA-256 of the config JSON |
//! | 4 + n | config JSON length (u32 LE) and bytes |
//! | 4 | block count, u32 LE |
//! | per block | name length (u32) and UTF-8 name, rank (u32), dims (u64 each), values (f32 LE) |
//!
//! Reloading within a build is bit-exact.

use crate::error::{CliError, CliResult};
use gamed_core::{GamedModel, ModelConfig, TrainConfig};
use gamed_tensor::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"GAMD";
pub const FORMAT_VERSION: u32 = 1;

/// Configuration stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl StoredConfig {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serialises")
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_json()))
    }
}

pub fn encode(model: &GamedModel<f32>, train: &TrainConfig) -> Vec<u8> {
    let cfg = StoredConfig {
        model: model.config.clone(),
        train: train.clone(),
    };
    let json = cfg.to_json();
    let mut buf = Vec::with_capacity(64 + json.len() + 4 * model.params.numel());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&Sha256::digest(&json));
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save(path: &Path, model: &GamedModel<f32>, train: &TrainConfig) -> CliResult<()> {
    std::fs::write(path, encode(model, train)).map_err(|e| CliError::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> CliResult<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::ModelFile(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> CliResult<(GamedModel<f32>, StoredConfig)> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CliError::ModelFile(format!(
            "bad magic {magic:02x?}, expected \"GAMD\"; not a model file or corrupted"
        )));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(CliError::ModelFile(format!(
            "model format version {version} is not supported; this build reads version {FORMAT_VERSION}"
        )));
    }
    let hash = r.take(32, "config hash")?.to_vec();
    let len = r.u32("config length")? as usize;
    let json = r.take(len, "config")?;
    if Sha256::digest(json).as_slice() != hash.as_slice() {
        return Err(CliError::ModelFile("config hash does not match the stored config".into()));
    }
    let cfg: StoredConfig =
        serde_json::from_slice(json).map_err(|e| CliError::ModelFile(format!("stored config: {e}")))?;
    let blocks = r.u32("block count")? as usize;
    let mut store = ParamStore::<f32>::new();
    for _ in 0..blocks {
        let n = r.u32("block name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "block name")?)
            .map_err(|_| CliError::ModelFile("block name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("block rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("block shape").map(|d| d as usize))
            .collect::<CliResult<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CliError::ModelFile(format!("block `{name}` shape overflows")))?;
        let raw = r.take(numel.checked_mul(4).unwrap_or(usize::MAX), "block values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, values).map_err(|e| CliError::ModelFile(format!("block `{name}`: {e}")))?;
        store.add(name, t);
    }
    if r.at != bytes.len() {
        return Err(CliError::ModelFile(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let mut model = GamedModel::<f32>::zeroed(cfg.model.clone())
        .map_err(|e| CliError::ModelFile(format!("stored config is invalid: {e}")))?;
    let missing = model.params.load_from(&store);
    if !missing.is_empty() {
        return Err(CliError::ModelFile(format!("missing or misshapen blocks: {}", missing.join(", "))));
    }
    if store.len() != model.params.len() {
        return Err(CliError::ModelFile(format!(
            "{} blocks stored, the configured model has {}",
            store.len(),
            model.params.len()
        )));
    }
    Ok((model, cfg))
}

pub fn load(path: &Path) -> CliResult<(GamedModel<f32>, StoredConfig)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::ModelFile(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        CliError::ModelFile(m) => CliError::ModelFile(format!("{}: {m}", path.display())),
        e => e,
    })
}

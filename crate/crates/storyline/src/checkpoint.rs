//! `SFCK1` parameter containers and their JSON sidecar.
//!
//! Layout: the magic `SFCK1`, then per parameter the name length (u32 LE),
//! the UTF-8 name, the rank (u32 LE), each dim (u64 LE) and the values
//! (f64 LE), until end of file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use storyline_core::model::{Model, ModelConfig};
use storyline_core::tensor::{ParamStore, Tensor};

use crate::error::{self, Error, Result};

pub const MAGIC: &[u8; 5] = b"SFCK1";
pub const PARAMS_FILE: &str = "model.sfck";
pub const SIDECAR_FILE: &str = "model.json";

pub fn encode_params(params: &ParamStore) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for (_, name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
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
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated {what} at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> std::result::Result<ParamStore, String> {
    if !bytes.starts_with(MAGIC) {
        return Err("missing SFCK1 magic".into());
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let mut store = ParamStore::new();
    while r.pos < bytes.len() {
        let len = r.u32("name length")? as usize;
        let name =
            std::str::from_utf8(r.take(len, "name")?).map_err(|_| "parameter name is not UTF-8")?;
        if store.id(name).is_some() {
            return Err(format!("duplicate parameter {name}"));
        }
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("dims").map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| format!("{name}: shape {shape:?} overflows"))?;
        let data = r
            .take(n, "values")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| format!("{name}: {e}"))?;
        store.insert(name, t);
    }
    Ok(store)
}

/// The JSON sidecar next to a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub config: ModelConfig,
    /// Names of the ablations switched off in `config`.
    pub ablations: Vec<String>,
    pub lineage: Option<String>,
    pub trained_steps: u64,
    /// Hash of the architecture and vocabulary this checkpoint was trained on.
    pub config_hash: String,
}

/// Hash of everything that must agree between a checkpoint and its users:
/// the architecture fields of the config and the vocabulary file hash.
pub fn architecture_hash(cfg: &ModelConfig, vocab_hash: &str) -> String {
    let key = format!(
        "layers={} heads={} model_dim={} ffn_dim={} vocab_size={} max_positions={} max_sentences={} vocab={}",
        cfg.layers, cfg.heads, cfg.model_dim, cfg.ffn_dim, cfg.vocab_size, cfg.max_positions, cfg.max_sentences, vocab_hash
    );
    crate::manifest::sha256_hex(key.as_bytes())
}

pub fn save(dir: &Path, model: &Model, vocab_hash: &str) -> Result<CheckpointMeta> {
    let meta = CheckpointMeta {
        format: "SFCK1".into(),
        config: model.config.clone(),
        ablations: model
            .config
            .ablations()
            .iter()
            .map(|a| a.name().to_string())
            .collect(),
        lineage: model.lineage.clone(),
        trained_steps: model.trained_steps,
        config_hash: architecture_hash(&model.config, vocab_hash),
    };
    error::write(&dir.join(PARAMS_FILE), encode_params(&model.params))?;
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serialises");
    error::write(&dir.join(SIDECAR_FILE), json + "\n")?;
    Ok(meta)
}

/// Loads a checkpoint directory, or the directory holding a `model.sfck`
/// path.
pub fn load(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let dir: PathBuf = if path.is_file() {
        path.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        path.to_path_buf()
    };
    let params_path = dir.join(PARAMS_FILE);
    let sidecar_path = dir.join(SIDECAR_FILE);
    if !params_path.exists() {
        return Err(Error::Invalid(format!(
            "no checkpoint at {}",
            params_path.display()
        )));
    }
    let meta: CheckpointMeta = serde_json::from_str(&error::read_to_string(&sidecar_path)?)
        .map_err(|e| Error::format(&sidecar_path, e.to_string()))?;
    let bytes = std::fs::read(&params_path).map_err(error::io(&params_path))?;
    let params = decode_params(&bytes).map_err(|m| Error::format(&params_path, m))?;
    let mut model = Model::from_params(meta.config.clone(), params)?;
    model.lineage = meta.lineage.clone();
    model.trained_steps = meta.trained_steps;
    Ok((model, meta))
}

//! Checkpoint files: JSON with a format version, the training config, the
//! current model, optimizer moments, epoch counter, log and best-dev model.
//! Floats are written in shortest round-trip form, so load then save
//! reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{OptimizerState, TrainConfig, TrainLog};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestModel {
    pub epoch: usize,
    pub dev_f1: f64,
    pub model: EncoderModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub model: EncoderModel,
    pub optimizer: OptimizerState,
    /// Epoch to run next. Sampling streams are derived from (seed, epoch), so
    /// this together with the seed in `config` is the whole RNG state.
    pub next_epoch: u64,
    pub log: TrainLog,
    pub best: Option<BestModel>,
}

impl Checkpoint {
    /// The model to predict with: best on dev if tracked, else the latest.
    pub fn selected_model(&self) -> &EncoderModel {
        self.best.as_ref().map_or(&self.model, |b| &b.model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |msg: String| Error::validation(format!("{}: corrupt checkpoint: {msg}", origin.display()));
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            None => return Err(corrupt("missing \"format_version\"".into())),
            Some(v) if v != FORMAT_VERSION as u64 => {
                return Err(Error::validation(format!(
                    "{}: checkpoint format_version {v}, this build reads {FORMAT_VERSION}",
                    origin.display()
                )))
            }
            Some(_) => {}
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        ckpt.model.validate()?;
        if let Some(b) = &ckpt.best {
            b.model.validate()?;
        }
        Ok(ckpt)
    }
}

/// Hex sha256 of a checkpoint file's bytes.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes();
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(digest(&bytes))
}

/// Loads a checkpoint and returns it with the digest of its bytes.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Checkpoint, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes, path)?;
    Ok((ckpt, digest(&bytes)))
}

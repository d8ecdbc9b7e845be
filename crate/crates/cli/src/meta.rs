use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pjx_core::data::Vocabularies;
use pjx_core::model::{ModelConfig, PjxModel};
use pjx_core::train::TrainConfig;
use pjx_core::PjxError;
use serde::{Deserialize, Serialize};

pub const META_FORMAT: u32 = 1;

/// Everything besides the weights needed to rebuild a trained model.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub version: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: Vocabularies,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "meta.json")
}

/// `<checkpoint>.<suffix>` next to the checkpoint.
pub fn sidecar(checkpoint: &Path, suffix: &str) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".");
    p.push(suffix);
    PathBuf::from(p)
}

fn mismatch(msg: String) -> anyhow::Error {
    PjxError::Checkpoint(msg).into()
}

/// Loads the checkpoint and its sidecar. Anything that does not fit
/// together is reported as a checkpoint mismatch.
pub fn load(checkpoint: &Path) -> Result<(PjxModel, CheckpointMeta)> {
    let weights = fs::read(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let mp = meta_path(checkpoint);
    let text = fs::read_to_string(&mp).map_err(|e| mismatch(format!("{}: {e}", mp.display())))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| mismatch(format!("{}: {e}", mp.display())))?;
    if meta.format != META_FORMAT {
        return Err(mismatch(format!(
            "{} has format {}, this build reads {META_FORMAT}",
            mp.display(),
            meta.format
        )));
    }
    let meta = CheckpointMeta {
        vocab: meta.vocab.reindex(),
        ..meta
    };
    let mut model = PjxModel::new(meta.model.clone(), 0).map_err(|e| mismatch(e.to_string()))?;
    model.load_weights(weights.as_slice())?;
    Ok((model, meta))
}

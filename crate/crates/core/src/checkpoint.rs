//! Parameter blobs with a JSON sidecar recording what they were trained for.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{ModelKind, PipelineConfig};
use crate::nn::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub config_hash: String,
    pub vocab_hash: String,
    pub vocab_size: usize,
    /// Model-specific normalization statistics.
    pub stats: serde_json::Value,
    /// Training settings and final losses, informational only.
    pub training: serde_json::Value,
}

pub fn params_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}.safetensors", kind.name()))
}

pub fn meta_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}.json", kind.name()))
}

pub fn save_checkpoint(dir: &Path, kind: ModelKind, ps: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    ps.save(params_path(dir, kind))?;
    let path = meta_path(dir, kind);
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads the sidecar and refuses it when the architecture or audio settings
/// differ from `cfg`, unless `force` is set.
pub fn read_meta(dir: &Path, kind: ModelKind, cfg: &PipelineConfig, force: bool) -> Result<CheckpointMeta> {
    let path = meta_path(dir, kind);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{} checkpoint {}", kind.name(), path.display())));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.kind != kind.name() {
        return Err(Error::Validation(format!(
            "{}: holds a {} model, expected {}",
            path.display(),
            meta.kind,
            kind.name()
        )));
    }
    let expected = cfg.model_hash(kind);
    if meta.config_hash != expected && !force {
        return Err(Error::ConfigMismatch { path, expected, found: meta.config_hash });
    }
    Ok(meta)
}

pub fn stats_from<T: DeserializeOwned>(meta: &CheckpointMeta) -> Result<T> {
    Ok(serde_json::from_value(meta.stats.clone())?)
}

pub fn load_params(dir: &Path, kind: ModelKind, ps: &ParamStore) -> Result<()> {
    ps.load(params_path(dir, kind))
}

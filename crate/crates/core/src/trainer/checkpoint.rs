use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::network::{ModelConfig, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn ckpt_err(path: &Path, reason: impl std::fmt::Display) -> TrainError {
    TrainError::Checkpoint(format!("{}: {reason}", path.display()))
}

/// Writes the checkpoint to a temporary sibling and renames it into place,
/// so readers never see a partial file.
pub fn save_checkpoint(
    config: &ModelConfig,
    params: &ParamStore,
    path: &Path,
) -> Result<(), TrainError> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
        params: params.clone(),
    };
    let text = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| ckpt_err(path, "not a file path"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| TrainError::io(&tmp, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| TrainError::io(&tmp, e))?;
    f.sync_all().map_err(|e| TrainError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| TrainError::io(path, e))
}

/// Reads a checkpoint and checks its tensors against its own config.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ckpt_err(path, e))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64);
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(ckpt_err(
            path,
            format!("unsupported format_version {version:?}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| ckpt_err(path, e))?;
    ckpt.config.validate().map_err(|e| ckpt_err(path, e))?;
    ckpt.params
        .check_against(&ckpt.config)
        .map_err(|e| ckpt_err(path, e))?;
    Ok(ckpt)
}

/// Loads a checkpoint and checks it against the model the caller is about
/// to run, e.g. one built for the devices present in a dataset.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint, TrainError> {
    let ckpt = load_checkpoint(path)?;
    ckpt.params
        .check_against(expected)
        .map_err(|e| ckpt_err(path, e))?;
    Ok(ckpt)
}

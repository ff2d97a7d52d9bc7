use std::path::Path;

use suitein_core::dataio::load_sequence;
use suitein_core::simkit::load_split;
use suitein_core::SequenceBundle;

use crate::error::{CliError, Result};

/// Loads every sequence listed under `split` in `<data>/split.json`.
pub fn load_split_bundles(data: &Path, split: &str) -> Result<Vec<SequenceBundle>> {
    let all = load_split(data)?;
    let ids = all.get(split).ok_or_else(|| {
        CliError::Config(format!(
            "unknown split {split}; expected train, val or test"
        ))
    })?;
    ids.iter()
        .map(|id| Ok(load_sequence(&data.join(id).join("manifest.json"))?))
        .collect()
}

pub fn parse_device_list(s: &str) -> Result<Vec<String>> {
    let ids: Vec<String> = s
        .split(',')
        .map(|d| d.trim().to_string())
        .filter(|d| !d.is_empty())
        .collect();
    if ids.is_empty() {
        return Err(CliError::Config("empty device list".into()));
    }
    Ok(ids)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DeviceSpec, EventKind, HeadingProcess, SimConfig, SimEvent, SpeedProfile};
use super::{simulate, SimError};
use crate::dataio::write_sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Sequence ids per split, stored as `split.json`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn get(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// A list of sequences and how to split them. Sequences are assigned to
/// train, val and test in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub sequences: Vec<SimConfig>,
    pub split: SplitCounts,
}

/// Decorrelates per-sequence seeds derived from one dataset seed.
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DatasetConfig {
    pub const DEFAULT_DURATION_S: f64 = 100.0;

    /// The shipped synthetic dataset: 12 sequences of phone, watch and
    /// earbuds split 8/2/2. Training sequences mix plain walks with
    /// stand-still, shaking and device-removal scenarios; validation and
    /// test sequences are event-free apart from one stand-still.
    pub fn default_synthetic(seed: u64) -> Self {
        let d = Self::DEFAULT_DURATION_S;
        let ev = |kind, device: Option<&str>, a: f64, b: f64| SimEvent {
            kind,
            device_id: device.map(str::to_string),
            t_start: a,
            t_end: b,
        };
        let base = SimConfig {
            duration_s: d,
            devices: vec![
                DeviceSpec::phone(),
                DeviceSpec::watch(),
                DeviceSpec::earbuds(),
            ],
            ..SimConfig::default()
        };
        let speed = |mean| SpeedProfile {
            mean,
            ..SpeedProfile::default()
        };
        let curvy = HeadingProcess {
            noise_scale: 0.4,
            ..HeadingProcess::default()
        };
        let variants: Vec<SimConfig> = vec![
            base.clone(),
            SimConfig {
                walk_speed_mps: speed(1.5),
                ..base.clone()
            },
            SimConfig {
                events: vec![ev(EventKind::StandStill, None, 30.0, 45.0)],
                ..base.clone()
            },
            SimConfig {
                events: vec![ev(EventKind::ShakeAll, None, 40.0, 50.0)],
                ..base.clone()
            },
            SimConfig {
                events: vec![ev(EventKind::RemoveDevice, Some("watch"), 50.0, d)],
                ..base.clone()
            },
            SimConfig {
                events: vec![ev(EventKind::RemoveDevice, Some("earbuds"), 40.0, d)],
                ..base.clone()
            },
            SimConfig {
                walk_speed_mps: speed(1.0),
                events: vec![ev(EventKind::RemoveDevice, Some("watch"), 10.0, 45.0)],
                ..base.clone()
            },
            SimConfig {
                heading_process: curvy,
                events: vec![ev(EventKind::RemoveDevice, Some("phone"), 60.0, 90.0)],
                ..base.clone()
            },
            base.clone(),
            SimConfig {
                events: vec![ev(EventKind::StandStill, None, 40.0, 55.0)],
                ..base.clone()
            },
            base.clone(),
            SimConfig {
                heading_process: curvy,
                ..base
            },
        ];
        let sequences = variants
            .into_iter()
            .enumerate()
            .map(|(i, c)| SimConfig {
                sequence_id: Some(format!("seq_{i:02}")),
                seed: mix_seed(seed, i as u64),
                ..c
            })
            .collect();
        Self {
            sequences,
            split: SplitCounts {
                train: 8,
                val: 2,
                test: 2,
            },
        }
    }

    /// Re-derives every sequence seed from `seed`.
    pub fn reseeded(mut self, seed: u64) -> Self {
        for (i, s) in self.sequences.iter_mut().enumerate() {
            s.seed = mix_seed(seed, i as u64);
        }
        self
    }

    fn resolved_ids(&self) -> Result<Vec<String>, SimError> {
        let ids: Vec<String> = self
            .sequences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.sequence_id
                    .clone()
                    .unwrap_or_else(|| format!("seq_{i:02}"))
            })
            .collect();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(SimError::Config(format!("duplicate sequence id {id}")));
            }
        }
        Ok(ids)
    }

    pub fn split_ids(&self) -> Result<Split, SimError> {
        let ids = self.resolved_ids()?;
        let c = self.split;
        if c.train + c.val + c.test != ids.len() {
            return Err(SimError::Config(format!(
                "split {}/{}/{} does not cover {} sequences",
                c.train,
                c.val,
                c.test,
                ids.len()
            )));
        }
        Ok(Split {
            train: ids[..c.train].to_vec(),
            val: ids[c.train..c.train + c.val].to_vec(),
            test: ids[c.train + c.val..].to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub manifests: Vec<PathBuf>,
    pub split_path: PathBuf,
    pub split: Split,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Simulates every sequence and writes `<out>/<id>/manifest.json` with its
/// CSVs, plus `<out>/split.json` and the resolved `<out>/dataset.json`.
pub fn emit_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetSummary, SimError> {
    let split = cfg.split_ids()?;
    let ids = cfg.resolved_ids()?;
    for s in &cfg.sequences {
        s.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut manifests = Vec::with_capacity(ids.len());
    for (id, seq) in ids.iter().zip(&cfg.sequences) {
        let seq = SimConfig {
            sequence_id: Some(id.clone()),
            ..seq.clone()
        };
        let out = simulate(&seq)?;
        manifests.push(write_sequence(
            &out_dir.join(id),
            &out.bundle,
            seq.ground_truth_rate_hz,
        )?);
    }
    let split_path = out_dir.join("split.json");
    fs::write(
        &split_path,
        serde_json::to_string_pretty(&split).expect("split serializes"),
    )
    .map_err(io(&split_path))?;
    let cfg_path = out_dir.join("dataset.json");
    fs::write(
        &cfg_path,
        serde_json::to_string_pretty(cfg).expect("config serializes"),
    )
    .map_err(io(&cfg_path))?;
    Ok(DatasetSummary {
        manifests,
        split_path,
        split,
    })
}

pub fn load_split(dataset_dir: &Path) -> Result<Split, SimError> {
    let path = dataset_dir.join("split.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
}

use std::path::{Path, PathBuf};

use clap::Args;
use suitein_core::simkit::{emit_dataset, SplitCounts};
use suitein_core::{DatasetConfig, SimConfig};

use crate::error::{CliError, Result};
use crate::run::{parse_json, read_text, RunManifest};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A dataset config (`sequences` + `split`) or a single sequence config.
    /// Without it the default 12-sequence synthetic dataset is generated.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, env = "SUITEIN_SEED")]
    pub seed: Option<u64>,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<DatasetConfig> {
    let text = read_text(path)?;
    let value: serde_json::Value = parse_json(path, &text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Config(format!("{}: expected a JSON object", path.display())))?;
    if obj.contains_key("sequences") {
        let cfg: DatasetConfig = parse_json(path, &text)?;
        Ok(match seed {
            Some(s) => cfg.reseeded(s),
            None => cfg,
        })
    } else {
        let mut seq: SimConfig = parse_json(path, &text)?;
        if let Some(s) = seed {
            seq.seed = s;
        }
        Ok(DatasetConfig {
            sequences: vec![seq],
            split: SplitCounts {
                train: 1,
                val: 0,
                test: 0,
            },
        })
    }
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => load_config(p, args.seed)?,
        None => DatasetConfig::default_synthetic(args.seed.unwrap_or(0)),
    };
    let summary = emit_dataset(&cfg, &args.out)?;
    eprintln!(
        "wrote {} sequences to {} (train {}, val {}, test {})",
        summary.manifests.len(),
        args.out.display(),
        summary.split.train.len(),
        summary.split.val.len(),
        summary.split.test.len()
    );

    let mut m = RunManifest::new("simulate");
    m.config_paths.extend(args.config.clone());
    m.seed = args.seed;
    m.outputs = summary.manifests;
    m.outputs.push(summary.split_path);
    m.outputs.push(args.out.join("dataset.json"));
    m.write(&args.out.join("run.json"))
}

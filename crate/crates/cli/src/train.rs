use std::path::PathBuf;

use clap::Args;
use suitein_core::dataio::prepare_windows;
use suitein_core::trainer::{fit, save_checkpoint};
use suitein_core::{TrainConfig, WindowBatch};

use crate::data::{load_split_bundles, parse_device_list};
use crate::error::{CliError, Result};
use crate::run::{ensure_parent, load_json, sibling, RunManifest};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path; the epoch log and run record are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop the private extractors and the contrastive/orthogonality terms.
    #[arg(long)]
    pub no_contrastive: bool,
    /// Train a one-device model on `--single-device` (default watch).
    #[arg(long)]
    pub no_aggregation: bool,
    /// Train a one-device model on this device.
    #[arg(long, value_name = "DEVICE")]
    pub single_device: Option<String>,
    /// Comma-separated devices to keep from the data, e.g. `phone,watch`.
    #[arg(long, value_name = "LIST")]
    pub device_subset: Option<String>,
    #[arg(long, env = "SUITEIN_SEED")]
    pub seed: Option<u64>,
}

fn windows(args: &TrainArgs, cfg: &TrainConfig, split: &str) -> Result<Vec<WindowBatch>> {
    let subset = args
        .device_subset
        .as_deref()
        .map(parse_device_list)
        .transpose()?;
    load_split_bundles(&args.data, split)?
        .iter()
        .map(|b| {
            let b = match &subset {
                Some(ids) => b.select_devices(ids)?,
                None => b.clone(),
            };
            Ok(prepare_windows(&b, cfg.window)?)
        })
        .collect()
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.no_contrastive {
        cfg.ablation.use_contrastive = false;
    }
    if args.no_aggregation {
        cfg.ablation.use_aggregation = false;
    }
    if let Some(d) = &args.single_device {
        cfg.ablation.use_aggregation = false;
        cfg.ablation.single_device = d.clone();
    }
    let train = windows(args, &cfg, "train")?;
    let val = windows(args, &cfg, "val")?;
    if train.is_empty() {
        return Err(CliError::Config(format!(
            "{}: the train split is empty",
            args.data.display()
        )));
    }

    let model = fit(&train, &val, &cfg)?;
    for r in &model.log.epochs {
        let val = r
            .val_mse
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        eprintln!(
            "epoch {:3}  total {:.4}  vel {:.4}  con {:.4}  orth {:.4}  val_mse {val}  {:.1} s",
            r.epoch, r.total, r.vel, r.con, r.orth, r.seconds
        );
    }

    ensure_parent(&args.out)?;
    save_checkpoint(&model.config, &model.params, &args.out)?;
    let log_path = sibling(&args.out, "log.csv");
    model.log.write_csv(&log_path)?;
    let resolved = sibling(&args.out, "train_config.json");
    crate::run::write_json(&resolved, &cfg)?;

    let mut m = RunManifest::new("train");
    m.config_paths.extend(args.config.clone());
    m.inputs.push(args.data.clone());
    m.seed = Some(cfg.seed);
    m.outputs = vec![args.out.clone(), log_path, resolved];
    m.write(&sibling(&args.out, "run.json"))
}

use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use suitein_core::evaluator::{
    evaluate_sequence, write_aggregate_csv, write_report_json, write_trajectory_csv, Predictor,
};
use suitein_core::trainer::load_checkpoint;
use suitein_core::{EvalConfig, EvalReport};

use crate::data::load_split_bundles;
use crate::error::{CliError, Result};
use crate::run::{create_dir, RunManifest};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`. Not needed with `--oracle-velocities`.
    #[arg(long, required_unless_present = "oracle_velocities")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 10.0)]
    pub rte_interval: f64,
    /// Inference stride in samples; defaults to the window length.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Integrate the ground-truth window velocities instead of a model's.
    #[arg(long, conflicts_with = "model")]
    pub oracle_velocities: bool,
    /// Window length for `--oracle-velocities`.
    #[arg(long, default_value_t = 50)]
    pub window_len: usize,
    /// Sequences evaluated in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    if args.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let checkpoint = args.model.as_deref().map(load_checkpoint).transpose()?;
    let predictor = match &checkpoint {
        Some(c) => Predictor::Model {
            config: &c.config,
            params: &c.params,
        },
        None => Predictor::Oracle {
            window_len: args.window_len,
        },
    };
    let cfg = EvalConfig {
        stride: args.stride,
        rte_interval_s: args.rte_interval,
    };
    let bundles = load_split_bundles(&args.data, &args.split)?;
    let out = args.out.join(&args.split);
    create_dir(&out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(EvalReport, Vec<PathBuf>)>> = pool.install(|| {
        bundles
            .par_iter()
            .map(|b| {
                let ev = evaluate_sequence(predictor, b, &cfg)?;
                let id = &ev.report.sequence_id;
                let report_path = out.join(format!("{id}.json"));
                let traj_path = out.join(format!("{id}.traj.csv"));
                write_report_json(&report_path, &ev.report)?;
                write_trajectory_csv(&traj_path, &ev.trajectory)?;
                Ok((ev.report, vec![report_path, traj_path]))
            })
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    let mut outputs = Vec::new();
    for r in results {
        let (report, paths) = r?;
        eprintln!(
            "{}  ATE {:.3} m  RTE {:.3} m",
            report.sequence_id, report.ate_m, report.rte_m
        );
        reports.push(report);
        outputs.extend(paths);
    }
    if !reports.is_empty() {
        let n = reports.len() as f64;
        eprintln!(
            "mean over {} sequences  ATE {:.3} m  RTE {:.3} m",
            reports.len(),
            reports.iter().map(|r| r.ate_m).sum::<f64>() / n,
            reports.iter().map(|r| r.rte_m).sum::<f64>() / n
        );
    }
    let agg = out.join("aggregate.csv");
    write_aggregate_csv(&agg, &reports)?;
    outputs.push(agg);

    let mut m = RunManifest::new("eval");
    m.inputs.push(args.data.clone());
    m.inputs.extend(args.model.clone());
    m.outputs = outputs;
    m.write(&out.join("run.json"))
}

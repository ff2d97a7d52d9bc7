use std::fs;
use std::path::PathBuf;

use clap::Args;
use suitein_core::evaluator::{ate, read_trajectory_csv, rte};
use suitein_core::plot::{render_svg, Caption};
use suitein_core::EvalError;

use crate::error::{CliError, Result};
use crate::run::{ensure_parent, sibling, RunManifest};

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Predicted trajectory CSV (`t,px,py`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth trajectory CSV (`t,px,py`).
    #[arg(long)]
    pub gt: PathBuf,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub rte_interval: f64,
}

pub fn run(args: &PlotArgs) -> Result<()> {
    let pred = read_trajectory_csv(&args.pred)?;
    let gt = read_trajectory_csv(&args.gt)?;
    let rte_m = match rte(&pred, &gt, args.rte_interval) {
        Ok(v) => Some(v),
        Err(EvalError::TooShort { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let caption = Caption {
        ate_m: ate(&pred, &gt)?,
        rte_m,
    };
    ensure_parent(&args.out)?;
    fs::write(&args.out, render_svg(&pred, &gt, &caption))
        .map_err(|e| CliError::io(&args.out, e))?;
    eprintln!("{}: {}", args.out.display(), caption.text());

    let mut m = RunManifest::new("plot");
    m.inputs = vec![args.pred.clone(), args.gt.clone()];
    m.outputs.push(args.out.clone());
    m.write(&sibling(&args.out, "run.json"))
}

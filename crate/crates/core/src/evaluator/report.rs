use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ate, integrate, rte, EvalError, Result, Trajectory};
use crate::dataio::{
    prepare_windows, read_ground_truth_csv, write_ground_truth_csv, GroundTruth, SequenceBundle,
    WindowConfig,
};
use crate::network::{predict, ModelConfig, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Window stride at inference; `None` means non-overlapping windows.
    pub stride: Option<usize>,
    pub rte_interval_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            stride: None,
            rte_interval_s: 10.0,
        }
    }
}

/// Where window velocities come from.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// The aggregated head of a trained model.
    Model {
        config: &'a ModelConfig,
        params: &'a ParamStore,
    },
    /// The ground-truth window targets themselves.
    Oracle { window_len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence_id: String,
    pub ate_m: f64,
    pub rte_m: f64,
    pub interval_s: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceEval {
    pub report: EvalReport,
    pub trajectory: Trajectory,
    pub ground_truth: Trajectory,
}

/// Windows the sequence, predicts each window's velocity, integrates from
/// the ground-truth position at the first window start and scores the
/// result.
pub fn evaluate_sequence(
    predictor: Predictor<'_>,
    bundle: &SequenceBundle,
    cfg: &EvalConfig,
) -> Result<SequenceEval> {
    let (window_len, bundle) = match predictor {
        Predictor::Model { config, .. } => {
            (config.window_len, bundle.select_devices(&config.devices)?)
        }
        Predictor::Oracle { window_len } => (window_len, bundle.clone()),
    };
    let wc = WindowConfig {
        window_len,
        stride: cfg.stride.unwrap_or(window_len),
    };
    let windows = prepare_windows(&bundle, wc)?;
    let velocities = match predictor {
        Predictor::Model { config, params } => (0..windows.len())
            .map(|i| predict(config, params, &windows.window(i)))
            .collect::<Result<Vec<_>, _>>()?,
        Predictor::Oracle { .. } => windows.targets.clone(),
    };
    let t0 = windows.window_start_times[0];
    let y0 = bundle
        .ground_truth
        .position_at(t0)
        .ok_or_else(|| EvalError::NoOverlap(format!("ground truth does not cover t = {t0}")))?;
    let trajectory = integrate(
        &velocities,
        &windows.window_start_times,
        windows.window_duration_s,
        y0,
    )?;
    let ground_truth = Trajectory::from(&bundle.ground_truth);
    let report = EvalReport {
        sequence_id: bundle.sequence_id.clone(),
        ate_m: ate(&trajectory, &ground_truth)?,
        rte_m: rte(&trajectory, &ground_truth, cfg.rte_interval_s)?,
        interval_s: cfg.rte_interval_s,
    };
    Ok(SequenceEval {
        report,
        trajectory,
        ground_truth,
    })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text).map_err(io(path))
}

/// `sequence_id,ate_m,rte_m`, one row per report.
pub fn write_aggregate_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path)(e.into()))?;
    let mut put = |rec: [String; 3]| w.write_record(rec).map_err(|e| io(path)(e.into()));
    put(["sequence_id".into(), "ate_m".into(), "rte_m".into()])?;
    for r in reports {
        put([
            r.sequence_id.clone(),
            r.ate_m.to_string(),
            r.rte_m.to_string(),
        ])?;
    }
    w.flush().map_err(io(path))
}

/// `t,px,py`, the same layout as ground-truth files.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let gt = GroundTruth::new(tr.timestamps().to_vec(), tr.positions().to_vec())?;
    Ok(write_ground_truth_csv(path, &gt)?)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let gt = read_ground_truth_csv(path)?;
    Trajectory::new(gt.timestamps().to_vec(), gt.positions().to_vec())
}

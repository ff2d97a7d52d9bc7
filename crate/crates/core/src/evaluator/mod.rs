//! Trajectory reconstruction from window velocities and ATE/RTE scoring.

mod report;

pub use report::{
    evaluate_sequence, read_trajectory_csv, write_aggregate_csv, write_report_json,
    write_trajectory_csv, EvalConfig, EvalReport, Predictor, SequenceEval,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::dataio::{interpolate, DataError, GroundTruth};
use crate::network::NetworkError;

/// Two boundaries closer than this are the same instant.
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("trajectories do not overlap in time: {0}")]
    NoOverlap(String),
    #[error("trajectory spans {span_s:.3} s, shorter than one {interval_s} s interval; use a smaller --rte-interval")]
    TooShort { span_s: f64, interval_s: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Timestamped planar positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    positions: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(timestamps: Vec<f64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if timestamps.len() != positions.len() || timestamps.is_empty() {
            return Err(EvalError::Contract(format!(
                "{} timestamps for {} positions",
                timestamps.len(),
                positions.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(EvalError::Contract(format!(
                "timestamps not increasing at index {}",
                i + 1
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::Contract("non-finite position".into()));
        }
        Ok(Self {
            timestamps,
            positions,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.timestamps[0], *self.timestamps.last().unwrap())
    }

    /// Linear interpolation; `None` outside the span.
    pub fn position_at(&self, t: f64) -> Option<[f64; 2]> {
        interpolate(&self.timestamps, &self.positions, t)
    }

    pub fn translated(&self, offset: [f64; 2]) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1]])
                .collect(),
        }
    }
}

impl From<&GroundTruth> for Trajectory {
    fn from(gt: &GroundTruth) -> Self {
        Self {
            timestamps: gt.timestamps().to_vec(),
            positions: gt.positions().to_vec(),
        }
    }
}

/// Integrates per-window mean velocities. Window `n` covers
/// `[starts[n], starts[n] + duration)`. Between consecutive window
/// boundaries the velocity is the mean over the windows covering that
/// segment, or zero where none does. The returned trajectory has one point
/// per boundary, starting at `y0`.
pub fn integrate(
    velocities: &[[f64; 2]],
    starts: &[f64],
    duration: f64,
    y0: [f64; 2],
) -> Result<Trajectory> {
    if velocities.len() != starts.len() || starts.is_empty() {
        return Err(EvalError::Contract(format!(
            "{} velocities for {} window starts",
            velocities.len(),
            starts.len()
        )));
    }
    if !(duration > 0.0) {
        return Err(EvalError::Contract(format!(
            "window duration {duration} must be positive"
        )));
    }
    if let Some(i) = starts.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(EvalError::Contract(format!(
            "windows out of order at index {}",
            i + 1
        )));
    }
    let mut bounds: Vec<f64> = starts.iter().flat_map(|&s| [s, s + duration]).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup_by(|b, a| (*b - *a).abs() < TIME_TOL);

    let mut positions = Vec::with_capacity(bounds.len());
    let mut p = y0;
    positions.push(p);
    // windows covering a segment form a contiguous index range
    let mut lo = 0;
    for seg in bounds.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        while lo < starts.len() && starts[lo] + duration <= a + TIME_TOL {
            lo += 1;
        }
        let mut v = [0.0, 0.0];
        let mut n = 0;
        for k in lo..starts.len() {
            if starts[k] > a + TIME_TOL {
                break;
            }
            if starts[k] + duration >= b - TIME_TOL {
                v[0] += velocities[k][0];
                v[1] += velocities[k][1];
                n += 1;
            }
        }
        if n > 0 {
            let dt = (b - a) / n as f64;
            p = [p[0] + v[0] * dt, p[1] + v[1] * dt];
        }
        positions.push(p);
    }
    Trajectory::new(bounds, positions)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// RMSE of position error at every predicted timestamp inside the ground
/// truth's span, with ground truth linearly interpolated. No alignment.
pub fn ate(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&t, &p) in pred.timestamps.iter().zip(&pred.positions) {
        if let Some(g) = gt.position_at(t) {
            sum += dist(p, g).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        let (a, b) = (pred.span(), gt.span());
        return Err(EvalError::NoOverlap(format!(
            "prediction [{}, {}] vs ground truth [{}, {}]",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok((sum / n as f64).sqrt())
}

/// Relative error over consecutive non-overlapping intervals of
/// `interval_s` starting at the first common timestamp. In each interval the
/// prediction is re-anchored to ground truth at the interval start, so the
/// error is `|(pred(t+T) - pred(t)) - (gt(t+T) - gt(t))|`; the result is the
/// mean over all complete intervals.
pub fn rte(pred: &Trajectory, gt: &Trajectory, interval_s: f64) -> Result<f64> {
    if !(interval_s > 0.0 && interval_s.is_finite()) {
        return Err(EvalError::Contract(format!(
            "interval {interval_s} must be positive"
        )));
    }
    let start = pred.span().0.max(gt.span().0);
    let end = pred.span().1.min(gt.span().1);
    if end < start {
        return Err(EvalError::NoOverlap(format!(
            "prediction ends at {} before ground truth starts at {}",
            pred.span().1,
            gt.span().0
        )));
    }
    let count = ((end - start + TIME_TOL) / interval_s).floor() as usize;
    if count == 0 {
        return Err(EvalError::TooShort {
            span_s: end - start,
            interval_s,
        });
    }
    let at = |tr: &Trajectory, t: f64| tr.position_at(t.min(end)).expect("inside common span");
    let mut sum = 0.0;
    for k in 0..count {
        let (t0, t1) = (
            start + k as f64 * interval_s,
            start + (k + 1) as f64 * interval_s,
        );
        let (p0, p1, g0, g1) = (at(pred, t0), at(pred, t1), at(gt, t0), at(gt, t1));
        let e = [
            (p1[0] - p0[0]) - (g1[0] - g0[0]),
            (p1[1] - p0[1]) - (g1[1] - g0[1]),
        ];
        sum += (e[0] * e[0] + e[1] * e[1]).sqrt();
    }
    Ok(sum / count as f64)
}

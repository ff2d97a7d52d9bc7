//! IMU stream ingestion, resampling and sliding-window extraction.
//!
//! A sequence on disk is a JSON manifest pointing at one CSV per device
//! (`t,ax,ay,az,gx,gy,gz`) and one ground-truth CSV (`t,px,py`). Streams are
//! resampled onto a shared grid of `k / common_rate_hz` timestamps so that
//! windows line up across devices.

mod files;
mod windows;

pub use files::{
    load_sequence, read_ground_truth_csv, read_stream_csv, write_ground_truth_csv, write_sequence,
    write_stream_csv, DeviceEntry, GroundTruthEntry, Manifest,
};
pub use windows::{make_windows, prepare_windows, WindowBatch, WindowConfig};

use std::path::PathBuf;

use thiserror::Error;

/// Channel count of one IMU sample: three accelerometer axes then three gyro axes.
pub const IMU_CHANNELS: usize = 6;

/// Timestamps within this distance of a grid point are treated as on it.
const GRID_TOL: f64 = 1e-6;

/// Slack allowed when checking that a time lies inside a sampled span.
const SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Row {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid stream: {0}")]
    Invalid(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// One device's timestamped 6-axis readings `[ax, ay, az, gx, gy, gz]`
/// (m/s², rad/s) at a nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    device_id: String,
    rate_hz: f64,
    timestamps: Vec<f64>,
    samples: Vec<[f64; IMU_CHANNELS]>,
}

impl SampleStream {
    /// Validates strictly increasing timestamps whose gaps stay within 20%
    /// of the nominal period.
    pub fn new(
        device_id: impl Into<String>,
        rate_hz: f64,
        timestamps: Vec<f64>,
        samples: Vec<[f64; IMU_CHANNELS]>,
    ) -> Result<Self> {
        let device_id = device_id.into();
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(DataError::Invalid(format!(
                "{device_id}: rate {rate_hz} Hz"
            )));
        }
        if timestamps.len() != samples.len() {
            return Err(DataError::Invalid(format!(
                "{device_id}: {} timestamps for {} samples",
                timestamps.len(),
                samples.len()
            )));
        }
        if let Some(i) = check_gaps(&timestamps, rate_hz) {
            return Err(DataError::Invalid(format!(
                "{device_id}: bad gap between samples {} and {} ({} -> {})",
                i - 1,
                i,
                timestamps[i - 1],
                timestamps[i]
            )));
        }
        Ok(Self {
            device_id,
            rate_hz,
            timestamps,
            samples,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn samples(&self) -> &[[f64; IMU_CHANNELS]] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear interpolation onto the grid `k / target_hz` for every `k` whose
    /// timestamp lies inside the stream's span. Only downsampling (or equal
    /// rate) is allowed.
    pub fn resample(&self, target_hz: f64) -> Result<SampleStream> {
        if !(target_hz > 0.0) || target_hz > self.rate_hz * (1.0 + 1e-9) {
            return Err(DataError::Invalid(format!(
                "{}: cannot resample {} Hz to {} Hz",
                self.device_id, self.rate_hz, target_hz
            )));
        }
        if self.len() < 2 {
            return Err(DataError::Degenerate(format!(
                "{}: need at least 2 samples to resample",
                self.device_id
            )));
        }
        let t0 = self.timestamps[0];
        let t1 = *self.timestamps.last().unwrap();
        let k_first = (t0 * target_hz - GRID_TOL).ceil() as i64;
        let k_last = (t1 * target_hz + GRID_TOL).floor() as i64;
        if k_last < k_first {
            return Err(DataError::Degenerate(format!(
                "{}: no {} Hz grid point inside [{}, {}]",
                self.device_id, target_hz, t0, t1
            )));
        }

        let mut timestamps = Vec::with_capacity((k_last - k_first + 1) as usize);
        let mut samples = Vec::with_capacity(timestamps.capacity());
        let mut seg = 0;
        for k in k_first..=k_last {
            let t = k as f64 / target_hz;
            let tc = t.clamp(t0, t1);
            while seg + 2 < self.timestamps.len() && self.timestamps[seg + 1] <= tc {
                seg += 1;
            }
            let (ta, tb) = (self.timestamps[seg], self.timestamps[seg + 1]);
            let frac = ((tc - ta) / (tb - ta)).clamp(0.0, 1.0);
            let (a, b) = (&self.samples[seg], &self.samples[seg + 1]);
            let mut s = [0.0; IMU_CHANNELS];
            for c in 0..IMU_CHANNELS {
                s[c] = a[c] + (b[c] - a[c]) * frac;
            }
            timestamps.push(t);
            samples.push(s);
        }
        SampleStream::new(self.device_id.clone(), target_hz, timestamps, samples)
    }
}

/// Index of the first sample whose gap to its predecessor is not positive or
/// deviates from `1 / rate_hz` by 20% or more.
fn check_gaps(timestamps: &[f64], rate_hz: f64) -> Option<usize> {
    let period = 1.0 / rate_hz;
    (1..timestamps.len()).find(|&i| {
        let dt = timestamps[i] - timestamps[i - 1];
        !(dt > 0.0) || (dt - period).abs() >= 0.2 * period
    })
}

/// Reference 2D positions (m) at strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    timestamps: Vec<f64>,
    positions: Vec<[f64; 2]>,
}

impl GroundTruth {
    pub fn new(timestamps: Vec<f64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if timestamps.len() != positions.len() {
            return Err(DataError::Invalid(format!(
                "ground truth: {} timestamps for {} positions",
                timestamps.len(),
                positions.len()
            )));
        }
        if timestamps.is_empty() {
            return Err(DataError::Degenerate("empty ground truth".into()));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| !(timestamps[i] > timestamps[i - 1])) {
            return Err(DataError::Invalid(format!(
                "ground truth: timestamp {} not after {}",
                timestamps[i],
                timestamps[i - 1]
            )));
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

    pub fn span(&self) -> (f64, f64) {
        (self.timestamps[0], *self.timestamps.last().unwrap())
    }

    /// Linearly interpolated position, `None` outside the covered span.
    pub fn position_at(&self, t: f64) -> Option<[f64; 2]> {
        interpolate(&self.timestamps, &self.positions, t)
    }
}

/// Piecewise-linear interpolation of 2D points; exact at sample times.
pub(crate) fn interpolate(ts: &[f64], ps: &[[f64; 2]], t: f64) -> Option<[f64; 2]> {
    let (first, last) = (*ts.first()?, *ts.last()?);
    if t < first - SPAN_TOL || t > last + SPAN_TOL {
        return None;
    }
    let i = ts.partition_point(|&x| x <= t);
    if i == 0 {
        return Some(ps[0]);
    }
    if i >= ts.len() {
        return Some(ps[ts.len() - 1]);
    }
    let (ta, tb) = (ts[i - 1], ts[i]);
    if t == ta {
        return Some(ps[i - 1]);
    }
    let f = (t - ta) / (tb - ta);
    let (a, b) = (ps[i - 1], ps[i]);
    Some([a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f])
}

/// All device streams of one recording plus its ground truth. Device order
/// is significant: it fixes which extractor sees which stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub sequence_id: String,
    pub streams: Vec<SampleStream>,
    pub ground_truth: GroundTruth,
    pub common_rate_hz: f64,
}

impl SequenceBundle {
    pub const DEFAULT_RATE_HZ: f64 = 25.0;

    pub fn new(
        sequence_id: impl Into<String>,
        streams: Vec<SampleStream>,
        ground_truth: GroundTruth,
        common_rate_hz: f64,
    ) -> Result<Self> {
        let sequence_id = sequence_id.into();
        if streams.is_empty() {
            return Err(DataError::Invalid(format!(
                "{sequence_id}: no device streams"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &streams {
            if s.is_empty() {
                return Err(DataError::Degenerate(format!(
                    "{sequence_id}: stream {} is empty",
                    s.device_id
                )));
            }
            if !seen.insert(s.device_id.clone()) {
                return Err(DataError::Invalid(format!(
                    "{sequence_id}: duplicate device {}",
                    s.device_id
                )));
            }
        }
        if !(common_rate_hz > 0.0) {
            return Err(DataError::Invalid(format!(
                "{sequence_id}: common rate {common_rate_hz}"
            )));
        }
        let bundle = Self {
            sequence_id,
            streams,
            ground_truth,
            common_rate_hz,
        };
        let (lo, hi) = bundle.overlap();
        if !(hi > lo) {
            return Err(DataError::Degenerate(format!(
                "{}: streams and ground truth do not overlap in time",
                bundle.sequence_id
            )));
        }
        Ok(bundle)
    }

    pub fn num_devices(&self) -> usize {
        self.streams.len()
    }

    pub fn device_ids(&self) -> Vec<String> {
        self.streams.iter().map(|s| s.device_id.clone()).collect()
    }

    /// Time interval covered by every stream and the ground truth.
    pub fn overlap(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self.ground_truth.span();
        for s in &self.streams {
            lo = lo.max(s.timestamps[0]);
            hi = hi.min(*s.timestamps.last().unwrap());
        }
        (lo, hi)
    }

    /// Every stream resampled to `common_rate_hz`.
    pub fn resampled(&self) -> Result<SequenceBundle> {
        let streams = self
            .streams
            .iter()
            .map(|s| s.resample(self.common_rate_hz))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            streams,
            ..self.clone()
        })
    }

    /// Keeps only the named devices, in the order given.
    pub fn select_devices(&self, ids: &[String]) -> Result<SequenceBundle> {
        let streams = ids
            .iter()
            .map(|id| {
                self.streams
                    .iter()
                    .find(|s| &s.device_id == id)
                    .cloned()
                    .ok_or_else(|| {
                        DataError::Invalid(format!(
                            "{}: device {id} not present (have {:?})",
                            self.sequence_id,
                            self.device_ids()
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            streams,
            ..self.clone()
        })
    }
}

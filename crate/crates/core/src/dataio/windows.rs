use serde::{Deserialize, Serialize};

use super::{DataError, Result, SequenceBundle, GRID_TOL, IMU_CHANNELS};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Samples per window at the common rate.
    pub window_len: usize,
    /// Samples between consecutive window starts.
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 50,
            stride: 25,
        }
    }
}

/// Fixed-length multi-device windows of one sequence and their mean-velocity
/// targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub sequence_id: String,
    pub device_ids: Vec<String>,
    /// `[B, J, 6, L]`
    pub windows: Tensor,
    /// Mean planar velocity (m/s) over each window.
    pub targets: Vec<[f64; 2]>,
    pub window_start_times: Vec<f64>,
    pub window_duration_s: f64,
    /// Windows skipped because ground truth did not cover them.
    pub dropped: usize,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_devices(&self) -> usize {
        self.device_ids.len()
    }

    pub fn window_len(&self) -> usize {
        self.windows.shape()[3]
    }

    /// Window `i` as a `[J, 6, L]` tensor.
    pub fn window(&self, i: usize) -> Tensor {
        let per = self.num_devices() * IMU_CHANNELS * self.window_len();
        Tensor::new(
            self.windows.shape()[1..].to_vec(),
            self.windows.data()[i * per..(i + 1) * per].to_vec(),
        )
        .expect("window slice matches its shape")
    }

    /// Keeps only the named devices, in the given order.
    pub fn select_devices(&self, ids: &[String]) -> Result<WindowBatch> {
        let idx = ids
            .iter()
            .map(|id| {
                self.device_ids.iter().position(|d| d == id).ok_or_else(|| {
                    DataError::Invalid(format!("{}: no device {id}", self.sequence_id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let per = IMU_CHANNELS * self.window_len();
        let mut data = Vec::with_capacity(self.len() * idx.len() * per);
        for w in self.windows.data().chunks(self.num_devices() * per) {
            for &d in &idx {
                data.extend_from_slice(&w[d * per..(d + 1) * per]);
            }
        }
        Ok(WindowBatch {
            device_ids: ids.to_vec(),
            windows: Tensor::new(
                vec![self.len(), idx.len(), IMU_CHANNELS, self.window_len()],
                data,
            )
            .map_err(|e| DataError::Invalid(e.to_string()))?,
            ..self.clone()
        })
    }

    /// `[B, 2]` targets as `f32`.
    pub fn targets_tensor(&self) -> Tensor {
        let data = self
            .targets
            .iter()
            .flat_map(|v| [v[0] as f32, v[1] as f32])
            .collect();
        Tensor::new(vec![self.len(), 2], data).expect("batches are never empty")
    }
}

/// Grid index of a timestamp on the `k / rate` grid, if it lies on one.
fn grid_index(t: f64, rate: f64) -> Option<i64> {
    let k = (t * rate).round();
    ((t - k / rate).abs() < GRID_TOL).then_some(k as i64)
}

/// Slices windows from a bundle whose streams are already at the common
/// rate. The target of a window spanning `[t0, t1)` is
/// `(y(t1) - y(t0)) / (t1 - t0)` with `y` the linearly interpolated ground
/// truth; windows the ground truth does not cover are dropped and counted.
pub fn make_windows(bundle: &SequenceBundle, cfg: WindowConfig) -> Result<WindowBatch> {
    let (len, stride) = (cfg.window_len, cfg.stride);
    if len == 0 || stride == 0 {
        return Err(DataError::Invalid(format!(
            "window length {len} and stride {stride} must be positive"
        )));
    }
    let rate = bundle.common_rate_hz;
    let mut k_lo = i64::MIN;
    let mut k_hi = i64::MAX;
    let mut firsts = Vec::with_capacity(bundle.streams.len());
    for s in &bundle.streams {
        if (s.rate_hz() - rate).abs() > 1e-9 * rate {
            return Err(DataError::Invalid(format!(
                "{}: stream at {} Hz, resample to {rate} Hz before windowing",
                s.device_id(),
                s.rate_hz()
            )));
        }
        let first = grid_index(s.timestamps()[0], rate);
        let last = grid_index(*s.timestamps().last().unwrap(), rate);
        let (Some(first), Some(last)) = (first, last) else {
            return Err(DataError::Invalid(format!(
                "{}: timestamps are not on the {rate} Hz grid",
                s.device_id()
            )));
        };
        k_lo = k_lo.max(first);
        k_hi = k_hi.min(last);
        firsts.push(first);
    }

    let j = bundle.streams.len();
    let duration = len as f64 / rate;
    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut starts = Vec::new();
    let mut dropped = 0;
    let mut k = k_lo;
    while k + len as i64 - 1 <= k_hi {
        let t0 = k as f64 / rate;
        let t1 = (k + len as i64) as f64 / rate;
        match (
            bundle.ground_truth.position_at(t0),
            bundle.ground_truth.position_at(t1),
        ) {
            (Some(p0), Some(p1)) => {
                for (s, &first) in bundle.streams.iter().zip(&firsts) {
                    let offset = (k - first) as usize;
                    let rows = &s.samples()[offset..offset + len];
                    for c in 0..IMU_CHANNELS {
                        data.extend(rows.iter().map(|r| r[c] as f32));
                    }
                }
                targets.push([(p1[0] - p0[0]) / duration, (p1[1] - p0[1]) / duration]);
                starts.push(t0);
            }
            _ => dropped += 1,
        }
        k += stride as i64;
    }
    if targets.is_empty() {
        return Err(DataError::Degenerate(format!(
            "{}: no complete window of {len} samples fits the data ({dropped} dropped)",
            bundle.sequence_id
        )));
    }
    let windows = Tensor::new(vec![targets.len(), j, IMU_CHANNELS, len], data)
        .expect("window buffer matches its shape");
    Ok(WindowBatch {
        sequence_id: bundle.sequence_id.clone(),
        device_ids: bundle.device_ids(),
        windows,
        targets,
        window_start_times: starts,
        window_duration_s: duration,
        dropped,
    })
}

/// Resamples every stream to the common rate, then windows.
pub fn prepare_windows(bundle: &SequenceBundle, cfg: WindowConfig) -> Result<WindowBatch> {
    make_windows(&bundle.resampled()?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{GroundTruth, SampleStream};

    fn bundle_with_path(path: impl Fn(f64) -> [f64; 2], seconds: f64) -> SequenceBundle {
        let imu_ts: Vec<f64> = (0..(seconds * 100.0) as usize)
            .map(|i| i as f64 / 100.0)
            .collect();
        let imu = SampleStream::new("phone", 100.0, imu_ts.clone(), vec![[0.0; 6]; imu_ts.len()])
            .unwrap();
        let ear_ts: Vec<f64> = (0..(seconds * 25.0) as usize)
            .map(|i| i as f64 / 25.0)
            .collect();
        let ear = SampleStream::new(
            "earbuds",
            25.0,
            ear_ts.clone(),
            vec![[1.0; 6]; ear_ts.len()],
        )
        .unwrap();
        let gt_ts: Vec<f64> = (0..=(seconds * 30.0) as usize)
            .map(|i| i as f64 / 30.0)
            .collect();
        let gt = GroundTruth::new(gt_ts.clone(), gt_ts.iter().map(|&t| path(t)).collect()).unwrap();
        SequenceBundle::new("s", vec![imu, ear], gt, 25.0).unwrap()
    }

    #[test]
    fn constant_velocity_targets() {
        let b = bundle_with_path(|t| [t, 0.0], 20.0);
        let w = prepare_windows(&b, WindowConfig::default()).unwrap();
        assert!(w.len() > 10);
        for v in &w.targets {
            assert!((v[0] - 1.0).abs() < 1e-9 && v[1].abs() < 1e-12);
        }
        assert_eq!(w.windows.shape(), &[w.len(), 2, 6, 50]);
        // earbuds channel block is all ones
        assert!(w.window(0).data()[300..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn stationary_targets_are_zero() {
        let b = bundle_with_path(|_| [3.0, -2.0], 10.0);
        let w = prepare_windows(&b, WindowConfig::default()).unwrap();
        assert!(w.targets.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn requires_common_rate() {
        let b = bundle_with_path(|t| [t, 0.0], 10.0);
        assert!(make_windows(&b, WindowConfig::default()).is_err());
    }

    #[test]
    fn non_overlapping_windows_tile_and_integrate() {
        let b = bundle_with_path(|t| [t.sin() * 3.0, (0.3 * t).cos()], 30.0);
        let cfg = WindowConfig {
            window_len: 50,
            stride: 50,
        };
        let w = prepare_windows(&b, cfg).unwrap();
        for pair in w.window_start_times.windows(2) {
            assert!((pair[1] - pair[0] - w.window_duration_s).abs() < 1e-12);
        }
        let mut p = b.ground_truth.position_at(w.window_start_times[0]).unwrap();
        for v in &w.targets {
            p[0] += v[0] * w.window_duration_s;
            p[1] += v[1] * w.window_duration_s;
        }
        let end = w.window_start_times.last().unwrap() + w.window_duration_s;
        let q = b.ground_truth.position_at(end).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
    }

    #[test]
    fn device_selection_reorders_blocks() {
        let b = bundle_with_path(|t| [t, 0.0], 5.0);
        let w = prepare_windows(&b, WindowConfig::default()).unwrap();
        let ear = w.select_devices(&["earbuds".into()]).unwrap();
        assert_eq!(ear.windows.shape(), &[w.len(), 1, 6, 50]);
        assert!(ear.windows.data().iter().all(|&v| v == 1.0));
        let swapped = w
            .select_devices(&["earbuds".into(), "phone".into()])
            .unwrap();
        assert_eq!(&swapped.window(0).data()[..300], &w.window(0).data()[300..]);
        assert!(w.select_devices(&["ring".into()]).is_err());
    }

    #[test]
    fn uncovered_windows_are_dropped() {
        // Ground truth stops at 5 s while IMU runs to 10 s.
        let b = bundle_with_path(|t| [t, 0.0], 10.0);
        let gt_ts: Vec<f64> = (0..=150).map(|i| i as f64 / 30.0).collect();
        let gt =
            GroundTruth::new(gt_ts.clone(), gt_ts.iter().map(|&t| [t, 0.0]).collect()).unwrap();
        let b = SequenceBundle::new("s", b.streams, gt, 25.0).unwrap();
        let w = prepare_windows(&b, WindowConfig::default()).unwrap();
        assert!(w.dropped > 0);
        assert!(w
            .window_start_times
            .iter()
            .all(|t| t + w.window_duration_s <= 5.0 + 1e-9));
    }
}

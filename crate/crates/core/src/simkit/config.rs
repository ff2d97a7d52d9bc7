use serde::{Deserialize, Serialize};

use super::SimError;

/// Mean-reverting walking speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedProfile {
    pub mean: f64,
    pub std: f64,
    /// Reversion rate of the speed process, 1/s.
    pub reversion_rate: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            mean: 1.3,
            std: 0.25,
            reversion_rate: 0.2,
        }
    }
}

/// Turn rate follows `dr = -mean_reversion * r dt + noise_scale dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadingProcess {
    pub mean_reversion: f64,
    pub noise_scale: f64,
    /// Starting heading in radians; drawn uniformly when absent.
    pub initial_rad: Option<f64>,
}

impl Default for HeadingProcess {
    fn default() -> Self {
        Self {
            mean_reversion: 0.5,
            noise_scale: 0.25,
            initial_rad: None,
        }
    }
}

/// Body oscillation at the step frequency, which carries the speed and
/// direction information the regressor learns from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSpec {
    /// Forward speed modulation as a fraction of walking speed.
    pub surge: f64,
    /// Vertical velocity amplitude as a fraction of walking speed.
    pub bounce: f64,
    pub base_step_hz: f64,
    /// Extra step frequency per m/s of speed.
    pub step_hz_per_mps: f64,
}

impl Default for GaitSpec {
    fn default() -> Self {
        Self {
            surge: 0.08,
            bounce: 0.05,
            base_step_hz: 1.2,
            step_hz_per_mps: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulationKind {
    ArmSwing,
    HeadBob,
    HandVibration,
    None,
}

/// Device-local motion on top of the body's motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    pub kind: ArticulationKind,
    /// Peak linear acceleration, m/s².
    pub amplitude: f64,
    /// Oscillation frequency; 0 locks the motion to the gait cycle.
    pub frequency_hz: f64,
}

impl Articulation {
    pub const NONE: Articulation = Articulation {
        kind: ArticulationKind::None,
        amplitude: 0.0,
        frequency_hz: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: String,
    pub rate_hz: f64,
    pub articulation: Articulation,
}

impl DeviceSpec {
    pub fn phone() -> Self {
        Self {
            id: "phone".into(),
            rate_hz: 100.0,
            articulation: Articulation {
                kind: ArticulationKind::HandVibration,
                amplitude: 1.2,
                frequency_hz: 4.0,
            },
        }
    }

    pub fn watch() -> Self {
        Self {
            id: "watch".into(),
            rate_hz: 100.0,
            articulation: Articulation {
                kind: ArticulationKind::ArmSwing,
                amplitude: 3.0,
                frequency_hz: 0.0,
            },
        }
    }

    pub fn earbuds() -> Self {
        Self {
            id: "earbuds".into(),
            rate_hz: 25.0,
            articulation: Articulation {
                kind: ArticulationKind::HeadBob,
                amplitude: 0.8,
                frequency_hz: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// m/s²
    pub accel: f64,
    /// rad/s
    pub gyro: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            accel: 0.08,
            gyro: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The device is put down: it records rest plus noise while walking continues.
    RemoveDevice,
    /// The walker stops; global velocity is exactly zero inside the interval.
    StandStill,
    /// Every device is shaken with large band-limited accelerations.
    ShakeAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    pub t_start: f64,
    pub t_end: f64,
}

impl SimEvent {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence_id: Option<String>,
    pub duration_s: f64,
    pub walk_speed_mps: SpeedProfile,
    pub heading_process: HeadingProcess,
    pub gait: GaitSpec,
    pub devices: Vec<DeviceSpec>,
    pub noise_std: NoiseSpec,
    /// Standard deviation of each device's slowly drifting yaw, rad.
    pub frame_drift_rad: f64,
    pub ground_truth_rate_hz: f64,
    pub common_rate_hz: f64,
    pub events: Vec<SimEvent>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sequence_id: None,
            duration_s: 120.0,
            walk_speed_mps: SpeedProfile::default(),
            heading_process: HeadingProcess::default(),
            gait: GaitSpec::default(),
            devices: vec![
                DeviceSpec::phone(),
                DeviceSpec::watch(),
                DeviceSpec::earbuds(),
            ],
            noise_std: NoiseSpec::default(),
            frame_drift_rad: 0.03,
            ground_truth_rate_hz: 30.0,
            common_rate_hz: 25.0,
            events: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        if self.devices.is_empty() {
            return bad("at least one device is required".into());
        }
        for r in [self.ground_truth_rate_hz, self.common_rate_hz]
            .into_iter()
            .chain(self.devices.iter().map(|d| d.rate_hz))
        {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("rates must be positive, got {r}"));
            }
        }
        for (i, d) in self.devices.iter().enumerate() {
            if self.devices[..i].iter().any(|o| o.id == d.id) {
                return bad(format!("duplicate device id {}", d.id));
            }
            if d.rate_hz < self.common_rate_hz {
                return bad(format!(
                    "device {} rate {} Hz is below the common rate {} Hz",
                    d.id, d.rate_hz, self.common_rate_hz
                ));
            }
        }
        let s = &self.walk_speed_mps;
        if s.mean < 0.0 || s.std < 0.0 || s.reversion_rate < 0.0 {
            return bad("walk speed parameters must be non-negative".into());
        }
        for e in &self.events {
            if !(0.0 <= e.t_start && e.t_start < e.t_end && e.t_end <= self.duration_s) {
                return bad(format!(
                    "event {:?} interval [{}, {}] must lie inside [0, {}]",
                    e.kind, e.t_start, e.t_end, self.duration_s
                ));
            }
            match (&e.kind, &e.device_id) {
                (EventKind::RemoveDevice, None) => {
                    return bad("remove_device needs a device_id".into());
                }
                (EventKind::RemoveDevice, Some(id))
                    if !self.devices.iter().any(|d| &d.id == id) =>
                {
                    return bad(format!("event references unknown device {id}"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

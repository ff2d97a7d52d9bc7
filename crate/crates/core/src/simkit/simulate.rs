use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ArticulationKind, DeviceSpec, EventKind, SimConfig, SimEvent};
use super::SimError;
use crate::dataio::{GroundTruth, SampleStream, SequenceBundle, IMU_CHANNELS};

/// Internal integration rate; a common multiple of 100, 25 and 30 Hz so the
/// default device and ground-truth rates sample it without interpolation.
pub const BASE_RATE_HZ: f64 = 300.0;

/// Length of the speed ramps around a stand-still interval, s.
const STAND_RAMP_S: f64 = 1.0;
/// Length of the envelope ramps inside a shake interval, s.
const SHAKE_RAMP_S: f64 = 0.5;
const SHAKE_TONES: usize = 6;
const SHAKE_ACCEL: f64 = 4.0;
const SHAKE_GYRO: f64 = 1.5;
/// Reversion rate of the device yaw drift, 1/s.
const YAW_REVERSION: f64 = 0.05;

type Vec3 = [f64; 3];

/// Densely sampled planar trajectory used as the simulator's reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTruth {
    pub rate_hz: f64,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
}

impl DenseTruth {
    fn lerp(&self, data: &[[f64; 2]], t: f64) -> [f64; 2] {
        let x = (t * self.rate_hz).clamp(0.0, (data.len() - 1) as f64);
        let i = (x.floor() as usize).min(data.len() - 2);
        let f = x - i as f64;
        let (a, b) = (data[i], data[i + 1]);
        [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f]
    }

    pub fn position_at(&self, t: f64) -> [f64; 2] {
        self.lerp(&self.positions, t)
    }

    pub fn velocity_at(&self, t: f64) -> [f64; 2] {
        self.lerp(&self.velocities, t)
    }

    pub fn duration_s(&self) -> f64 {
        (self.positions.len() - 1) as f64 / self.rate_hz
    }

    /// Mean of the velocity function over `[t0, t1]`, integrated with
    /// composite Simpson on a grid twice as fine as the dense samples.
    pub fn window_mean_velocity(&self, t0: f64, t1: f64) -> [f64; 2] {
        let n = (((t1 - t0) * self.rate_hz * 2.0).ceil() as usize).max(2) & !1;
        let h = (t1 - t0) / n as f64;
        let mut acc = [0.0; 2];
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let v = self.velocity_at(t0 + k as f64 * h);
            acc[0] += w * v[0];
            acc[1] += w * v[1];
        }
        let scale = h / 3.0 / (t1 - t0);
        [acc[0] * scale, acc[1] * scale]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub bundle: SequenceBundle,
    pub truth: DenseTruth,
}

/// Speed gate: 0 inside stand-still intervals, cosine ramps in the second
/// before and after, 1 elsewhere.
fn stand_gate(events: &[SimEvent], t: f64) -> f64 {
    events
        .iter()
        .filter(|e| e.kind == EventKind::StandStill)
        .map(|e| {
            if e.contains(t) {
                0.0
            } else if t > e.t_start - STAND_RAMP_S && t < e.t_start {
                0.5 * (1.0 + (PI * (t - (e.t_start - STAND_RAMP_S)) / STAND_RAMP_S).cos())
            } else if t > e.t_end && t < e.t_end + STAND_RAMP_S {
                0.5 * (1.0 - (PI * (t - e.t_end) / STAND_RAMP_S).cos())
            } else {
                1.0
            }
        })
        .product()
}

fn shake_envelope(events: &[SimEvent], t: f64) -> f64 {
    events
        .iter()
        .filter(|e| e.kind == EventKind::ShakeAll && e.contains(t))
        .map(|e| {
            let edge = (t - e.t_start).min(e.t_end - t);
            if edge >= SHAKE_RAMP_S {
                1.0
            } else {
                (0.5 * PI * edge / SHAKE_RAMP_S).sin().powi(2)
            }
        })
        .fold(0.0, f64::max)
}

/// Body kinematics on the dense grid.
struct Body {
    heading: Vec<f64>,
    /// Gated walking speed, used to scale gait-locked articulation.
    walk: Vec<f64>,
    phase: Vec<f64>,
    vel: Vec<Vec3>,
    acc: Vec<Vec3>,
    pos: Vec<[f64; 2]>,
}

fn simulate_body(cfg: &SimConfig, rng: &mut ChaCha8Rng, n: usize) -> Body {
    let dt = 1.0 / BASE_RATE_HZ;
    let hp = &cfg.heading_process;
    let sp = &cfg.walk_speed_mps;
    let gait = &cfg.gait;

    let drawn_heading = rng.random::<f64>() * TAU;
    let mut theta = hp.initial_rad.unwrap_or(drawn_heading);
    let mut phase = rng.random::<f64>() * TAU;
    let mut turn = 0.0;
    let mut dev = sp.std * rng.sample::<f64, _>(StandardNormal);
    let ref_speed = sp.mean.max(0.1);

    let mut body = Body {
        heading: Vec::with_capacity(n),
        walk: Vec::with_capacity(n),
        phase: Vec::with_capacity(n),
        vel: Vec::with_capacity(n),
        acc: vec![[0.0; 3]; n],
        pos: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = i as f64 / BASE_RATE_HZ;
        let speed = (sp.mean + dev).max(0.0);
        let g = stand_gate(&cfg.events, t);
        let fwd = g * speed * (1.0 + gait.surge * (-phase.cos() + 0.25 * (2.0 * phase).sin()));
        let up = g * speed * gait.bounce * phase.sin();
        body.heading.push(theta);
        body.walk.push(g * speed / ref_speed);
        body.phase.push(phase);
        body.vel.push([fwd * theta.cos(), fwd * theta.sin(), up]);

        let z_turn: f64 = rng.sample(StandardNormal);
        let z_speed: f64 = rng.sample(StandardNormal);
        theta += turn * dt;
        turn += -hp.mean_reversion * turn * dt + hp.noise_scale * dt.sqrt() * z_turn;
        dev += -sp.reversion_rate * dev * dt
            + sp.std * (2.0 * sp.reversion_rate * dt).sqrt() * z_speed;
        phase += TAU * (gait.base_step_hz + gait.step_hz_per_mps * speed) * dt;
    }

    let mut p = [0.0, 0.0];
    body.pos.push(p);
    for i in 1..n {
        let (a, b) = (body.vel[i - 1], body.vel[i]);
        p[0] += 0.5 * (a[0] + b[0]) * dt;
        p[1] += 0.5 * (a[1] + b[1]) * dt;
        body.pos.push(p);
    }
    for i in 0..n {
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let span = (hi - lo) as f64 * dt;
        for c in 0..3 {
            body.acc[i][c] = (body.vel[hi][c] - body.vel[lo][c]) / span;
        }
    }
    body
}

fn to_device(yaw: f64, v: Vec3) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]]
}

fn axpy(acc: &mut Vec3, a: f64, v: Vec3) {
    for k in 0..3 {
        acc[k] += a * v[k];
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    let v: Vec3 = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
    [v[0] / n, v[1] / n, v[2] / n]
}

struct Tone {
    freq: f64,
    phase: f64,
    accel_dir: Vec3,
    gyro_dir: Vec3,
}

/// Noise-free device-frame `[accel, gyro]` on the dense grid.
fn device_motion(
    cfg: &SimConfig,
    spec: &DeviceSpec,
    body: &Body,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 6]> {
    let n = body.vel.len();
    let dt = 1.0 / BASE_RATE_HZ;
    let drift = cfg.frame_drift_rad;

    let mut yaw = Vec::with_capacity(n);
    let mut psi = drift * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..n {
        yaw.push(psi);
        let z: f64 = rng.sample(StandardNormal);
        psi += -YAW_REVERSION * psi * dt + drift * (2.0 * YAW_REVERSION * dt).sqrt() * z;
    }
    let art_offset = rng.random::<f64>() * TAU;
    let envelope_offset = rng.random::<f64>() * TAU;
    let tones: Vec<Tone> = (0..SHAKE_TONES)
        .map(|_| Tone {
            freq: 3.0 + 5.0 * rng.random::<f64>(),
            phase: rng.random::<f64>() * TAU,
            accel_dir: random_direction(rng),
            gyro_dir: random_direction(rng),
        })
        .collect();
    let tone_scale = 1.0 / (SHAKE_TONES as f64).sqrt();

    let art = spec.articulation;
    let amp = art.amplitude;
    (0..n)
        .map(|i| {
            let t = i as f64 / BASE_RATE_HZ;
            let theta = body.heading[i];
            let fwd = [theta.cos(), theta.sin(), 0.0];
            let lat = [-theta.sin(), theta.cos(), 0.0];
            let up = [0.0, 0.0, 1.0];
            let walk = body.walk[i];

            let mut acc_w = body.acc[i];
            let mut gyro_w = [0.0; 3];
            let mut acc_d = [0.0; 3];
            let mut gyro_d = [0.0; 3];
            let locked = |base: f64| {
                if art.frequency_hz > 0.0 {
                    TAU * art.frequency_hz * t + art_offset
                } else {
                    base + art_offset
                }
            };
            match art.kind {
                ArticulationKind::ArmSwing => {
                    let a = locked(body.phase[i] / 2.0);
                    axpy(&mut acc_w, amp * walk * a.sin(), fwd);
                    axpy(&mut acc_w, 0.3 * amp * walk * (2.0 * a).cos(), up);
                    axpy(&mut gyro_w, 0.5 * amp * walk * a.cos(), lat);
                }
                ArticulationKind::HeadBob => {
                    let a = locked(body.phase[i]);
                    axpy(&mut acc_w, amp * walk * a.sin(), up);
                    axpy(&mut acc_w, 0.5 * amp * walk * (a / 2.0).sin(), lat);
                    axpy(&mut gyro_w, 0.2 * amp * walk * a.cos(), lat);
                    axpy(&mut gyro_w, 0.3 * amp * walk * (a / 2.0 + 0.5).sin(), up);
                }
                ArticulationKind::HandVibration => {
                    let f = if art.frequency_hz > 0.0 {
                        art.frequency_hz
                    } else {
                        4.0
                    };
                    let env = (TAU * 0.05 * t + envelope_offset).sin().max(0.0).powi(2);
                    let w = TAU * f * t + art_offset;
                    acc_d = [
                        amp * env * w.sin(),
                        amp * env * (1.37 * w + 1.0).sin(),
                        0.5 * amp * env * (0.71 * w + 2.0).sin(),
                    ];
                    gyro_d = [
                        0.4 * amp * env * (w + 0.5).cos(),
                        0.4 * amp * env * (1.19 * w).cos(),
                        0.4 * amp * env * (0.83 * w).sin(),
                    ];
                }
                ArticulationKind::None => {}
            }

            let shake = shake_envelope(&cfg.events, t);
            if shake > 0.0 {
                for tone in &tones {
                    let s = (TAU * tone.freq * t + tone.phase).sin() * shake * tone_scale;
                    axpy(&mut acc_d, SHAKE_ACCEL * s, tone.accel_dir);
                    axpy(&mut gyro_d, SHAKE_GYRO * s, tone.gyro_dir);
                }
            }

            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let yaw_rate = (yaw[hi] - yaw[lo]) / ((hi - lo) as f64 * dt);
            let a = to_device(yaw[i], acc_w);
            let g = to_device(yaw[i], gyro_w);
            [
                a[0] + acc_d[0],
                a[1] + acc_d[1],
                a[2] + acc_d[2],
                g[0] + gyro_d[0],
                g[1] + gyro_d[1],
                g[2] + gyro_d[2] + yaw_rate,
            ]
        })
        .collect()
}

/// Sample times `k / rate` covering `[0, duration]`.
fn sample_times(rate: f64, duration: f64) -> Vec<f64> {
    let last = (duration * rate + 1e-9).floor() as usize;
    (0..=last).map(|k| k as f64 / rate).collect()
}

/// Linear interpolation into a dense `BASE_RATE_HZ` array; exact when `t`
/// falls on a dense sample.
fn dense_at<const N: usize>(data: &[[f64; N]], t: f64) -> [f64; N] {
    let x = t * BASE_RATE_HZ;
    let r = x.round();
    if (x - r).abs() < 1e-6 {
        return data[(r as usize).min(data.len() - 1)];
    }
    let i = (x.floor() as usize).min(data.len() - 2);
    let f = x - i as f64;
    std::array::from_fn(|c| data[i][c] + (data[i + 1][c] - data[i][c]) * f)
}

/// Generates one multi-device walking sequence. Fully determined by the
/// config, including its seed.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let n = (cfg.duration_s * BASE_RATE_HZ).round() as usize + 1;
    let n = n.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let device_seeds: Vec<u64> = cfg.devices.iter().map(|_| rng.random()).collect();
    let body = simulate_body(cfg, &mut rng, n);

    let mut streams = Vec::with_capacity(cfg.devices.len());
    for (spec, seed) in cfg.devices.iter().zip(device_seeds) {
        let mut drng = ChaCha8Rng::seed_from_u64(seed);
        let motion = device_motion(cfg, spec, &body, &mut drng);
        let removed: Vec<&SimEvent> = cfg
            .events
            .iter()
            .filter(|e| {
                e.kind == EventKind::RemoveDevice && e.device_id.as_deref() == Some(&spec.id)
            })
            .collect();
        let times = sample_times(spec.rate_hz, cfg.duration_s);
        let samples = times
            .iter()
            .map(|&t| {
                let mut s = if removed.iter().any(|e| e.contains(t)) {
                    [0.0; IMU_CHANNELS]
                } else {
                    dense_at(&motion, t)
                };
                for (c, v) in s.iter_mut().enumerate() {
                    let sigma = if c < 3 {
                        cfg.noise_std.accel
                    } else {
                        cfg.noise_std.gyro
                    };
                    *v += sigma * drng.sample::<f64, _>(StandardNormal);
                }
                s
            })
            .collect();
        streams.push(SampleStream::new(
            spec.id.clone(),
            spec.rate_hz,
            times,
            samples,
        )?);
    }

    let gt_times = sample_times(cfg.ground_truth_rate_hz, cfg.duration_s);
    let gt_pos = gt_times.iter().map(|&t| dense_at(&body.pos, t)).collect();
    let ground_truth = GroundTruth::new(gt_times, gt_pos)?;
    let id = cfg
        .sequence_id
        .clone()
        .unwrap_or_else(|| format!("sim_{}", cfg.seed));
    let bundle = SequenceBundle::new(id, streams, ground_truth, cfg.common_rate_hz)?;
    let truth = DenseTruth {
        rate_hz: BASE_RATE_HZ,
        positions: body.pos,
        velocities: body.vel.iter().map(|v| [v[0], v[1]]).collect(),
    };
    Ok(SimOutput { bundle, truth })
}

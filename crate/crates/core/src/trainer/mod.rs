//! Mini-batch training with the combined loss.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, WindowBatch, WindowConfig};
use crate::losses::{window_loss, LossWeights, OrthMode};
use crate::network::{init_params, predict, Model, ModelConfig, NetworkError, ParamStore};
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
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
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Train on all devices with mean aggregation. When false, a `J = 1`
    /// model is trained on `single_device` alone.
    pub use_aggregation: bool,
    /// Private extractors plus contrastive and orthogonality terms.
    pub use_contrastive: bool,
    pub single_device: String,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_aggregation: true,
            use_contrastive: true,
            single_device: "watch".into(),
        }
    }
}

/// Multiplies the learning rate by `gamma` every `every_epochs` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every_epochs: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub orth_mode: OrthMode,
    pub shuffle: bool,
    pub ablation: Ablation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<StepDecay>,
    pub window: WindowConfig,
    /// Architecture; `devices` is filled in from the data.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: AdamConfig::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            orth_mode: OrthMode::default(),
            shuffle: true,
            ablation: Ablation::default(),
            lr_decay: None,
            window: WindowConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if let Some(d) = self.lr_decay {
            if d.every_epochs == 0 || !(d.gamma > 0.0) {
                return bad("lr_decay needs every_epochs > 0 and gamma > 0".into());
            }
        }
        self.loss_weights.validate().map_err(TrainError::Config)
    }

    /// The model actually trained on data with the given devices.
    pub fn resolve_model(&self, data_devices: &[String]) -> Result<ModelConfig, TrainError> {
        let a = &self.ablation;
        let devices = if a.use_aggregation {
            data_devices.to_vec()
        } else {
            if !data_devices.contains(&a.single_device) {
                return Err(TrainError::Config(format!(
                    "single device {} not among {data_devices:?}",
                    a.single_device
                )));
            }
            vec![a.single_device.clone()]
        };
        let cfg = ModelConfig {
            devices,
            window_len: self.window.window_len,
            tau: self.loss_weights.tau,
            with_private: a.use_contrastive && a.use_aggregation,
            ..self.model.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.gamma.powi(((epoch - 1) / d.every_epochs) as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub vel: f64,
    pub con: f64,
    pub orth: f64,
    /// Aggregated-head velocity MSE on the validation windows.
    pub val_mse: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let io = |e: csv::Error| TrainError::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["epoch", "total", "vel", "con", "orth", "val_mse", "seconds"])
            .map_err(io)?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.total.to_string(),
                r.vel.to_string(),
                r.con.to_string(),
                r.orth.to_string(),
                r.val_mse.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:.3}", r.seconds),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| TrainError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub log: TrainLog,
}

fn project(batches: &[WindowBatch], devices: &[String]) -> Result<Vec<WindowBatch>, TrainError> {
    batches
        .iter()
        .map(|b| {
            if b.device_ids == devices {
                Ok(b.clone())
            } else {
                Ok(b.select_devices(devices)?)
            }
        })
        .collect()
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Aggregated-head MSE (mean over both components) over every window.
pub fn validation_mse(
    config: &ModelConfig,
    params: &ParamStore,
    batches: &[WindowBatch],
) -> Result<Option<f64>, TrainError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for b in batches {
        for (i, t) in b.targets.iter().enumerate() {
            let v = predict(config, params, &b.window(i))?;
            sum += 0.5 * ((v[0] - t[0]).powi(2) + (v[1] - t[1]).powi(2));
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Loss values of one mini-batch step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepLosses {
    pub total: f64,
    pub vel: f64,
    pub con: f64,
    pub orth: f64,
}

/// Records the batch-mean loss on a fresh tape and returns it with the
/// gradient of every parameter.
pub fn batch_gradients(
    config: &ModelConfig,
    params: &ParamStore,
    examples: &[(Tensor, [f32; 2])],
    cfg: &TrainConfig,
) -> Result<(StepLosses, BTreeMap<String, Tensor>), TrainError> {
    let contrastive = cfg.ablation.use_contrastive && config.with_private;
    let mut tape = Tape::new();
    let model = Model::bind(&mut tape, config, params, true)?;
    let mut totals = Vec::with_capacity(examples.len());
    let mut sums = StepLosses::default();
    for (x, target) in examples {
        let xv = tape.constant(x.clone());
        let tv = tape.constant(Tensor::from_vec(target.to_vec()));
        let out = model.forward(&mut tape, xv, contrastive)?;
        let f = &out.features;
        let outputs = out.velocities.iter().chain(&f.shared).chain(&f.private);
        if !outputs.into_iter().all(|&v| tape.value(v).all_finite()) {
            let nan = StepLosses {
                total: f64::NAN,
                ..StepLosses::default()
            };
            return Ok((nan, BTreeMap::new()));
        }
        let l = window_loss(
            &mut tape,
            &out.features,
            &out.velocities,
            tv,
            &cfg.loss_weights,
            cfg.orth_mode,
            contrastive,
        )?;
        let val = |v| tape.value(v).data()[0] as f64;
        sums.vel += val(l.vel);
        sums.con += l.con.map(val).unwrap_or(0.0);
        sums.orth += l.orth.map(val).unwrap_or(0.0);
        totals.push(l.total);
    }
    let sum = tape.add_all(&totals)?;
    let loss = tape.scale(sum, 1.0 / totals.len() as f32);
    let n = examples.len() as f64;
    let losses = StepLosses {
        total: tape.value(loss).data()[0] as f64,
        vel: sums.vel / n,
        con: sums.con / n,
        orth: sums.orth / n,
    };
    if !losses.total.is_finite() {
        return Ok((losses, BTreeMap::new()));
    }
    let grads = tape.backward(loss)?;
    let map = model
        .vars()
        .map(|(name, v)| {
            (
                name.to_string(),
                grads.get(v).expect("parameters are trainable").clone(),
            )
        })
        .collect();
    Ok((losses, map))
}

/// Trains `params` (built for `config`) on the windows of `train`, scoring
/// `val` after every epoch. Batches must already carry `config.devices`.
pub fn train(
    train: &[WindowBatch],
    val: &[WindowBatch],
    config: &ModelConfig,
    mut params: ParamStore,
    cfg: &TrainConfig,
) -> Result<(ParamStore, TrainLog), TrainError> {
    cfg.validate()?;
    params.check_against(config)?;
    let index: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(b, batch)| (0..batch.len()).map(move |i| (b, i)))
        .collect();
    if index.is_empty() {
        return Err(TrainError::Config("training set has no windows".into()));
    }
    for b in train.iter().chain(val) {
        if b.device_ids != config.devices {
            return Err(TrainError::Config(format!(
                "{}: devices {:?} do not match model devices {:?}",
                b.sequence_id, b.device_ids, config.devices
            )));
        }
    }
    let mut adam = Adam::new(cfg.optimizer);
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order = index.clone();
        if cfg.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch)));
        }
        let lr = cfg.lr_at(epoch);
        let mut acc = StepLosses::default();
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let examples: Vec<(Tensor, [f32; 2])> = chunk
                .iter()
                .map(|&(b, i)| {
                    let t = train[b].targets[i];
                    (train[b].window(i), [t[0] as f32, t[1] as f32])
                })
                .collect();
            let (l, grads) = batch_gradients(config, &params, &examples, cfg)?;
            if !l.total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    detail: format!(
                        "total {} (vel {}, con {}, orth {}) over windows {:?}",
                        l.total, l.vel, l.con, l.orth, chunk
                    ),
                });
            }
            adam.step(&mut params, &grads, lr);
            let w = chunk.len() as f64;
            acc.total += l.total * w;
            acc.vel += l.vel * w;
            acc.con += l.con * w;
            acc.orth += l.orth * w;
        }
        let n = index.len() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            total: acc.total / n,
            vel: acc.vel / n,
            con: acc.con / n,
            orth: acc.orth / n,
            val_mse: validation_mse(config, &params, val)?,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, log))
}

/// Resolves the model for the data's devices and the ablation, initializes
/// it from the seed and trains it.
pub fn fit(
    train_data: &[WindowBatch],
    val: &[WindowBatch],
    cfg: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    let first = train_data
        .first()
        .ok_or_else(|| TrainError::Config("no training sequences".into()))?;
    let config = cfg.resolve_model(&first.device_ids)?;
    let train_p = project(train_data, &config.devices)?;
    let val_p = project(val, &config.devices)?;
    let params = init_params(&config, cfg.seed)?;
    let (params, log) = train(&train_p, &val_p, &config, params, cfg)?;
    Ok(TrainedModel {
        config,
        params,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::prepare_windows;
    use crate::simkit::{simulate, SimConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            window: WindowConfig {
                window_len: 8,
                stride: 8,
            },
            model: ModelConfig {
                shallow_width: 4,
                conv_channels: [4, 8],
                feature_dim: 8,
                regressor_hidden: 8,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn toy_windows(n: usize, cfg: &TrainConfig) -> WindowBatch {
        let sim = simulate(&SimConfig {
            duration_s: 4.0,
            seed: 1,
            ..SimConfig::default()
        })
        .unwrap();
        let mut w = prepare_windows(&sim.bundle, cfg.window).unwrap();
        let keep = n.min(w.len());
        let per = w.windows.len() / w.len();
        let mut shape = w.windows.shape().to_vec();
        shape[0] = keep;
        w.windows = Tensor::new(shape, w.windows.data()[..keep * per].to_vec()).unwrap();
        w.targets.truncate(keep);
        w.window_start_times.truncate(keep);
        w
    }

    #[test]
    fn two_runs_are_bit_identical() {
        let cfg = tiny_cfg();
        let data = vec![toy_windows(4, &cfg)];
        let a = fit(&data, &data, &cfg).unwrap();
        let b = fit(&data, &data, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.epochs.len(), 2);
        assert_ne!(a.params, init_params(&a.config, cfg.seed).unwrap());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..tiny_cfg()
        };
        let data = vec![toy_windows(4, &cfg)];
        let m = fit(&data, &[], &cfg).unwrap();
        assert_eq!(m.params, init_params(&m.config, cfg.seed).unwrap());
        assert!(m.log.epochs.iter().all(|e| e.val_mse.is_none()));
    }

    #[test]
    fn one_step_touches_every_namespace() {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            shuffle: false,
            ..tiny_cfg()
        };
        let data = vec![toy_windows(4, &cfg)];
        let m = fit(&data, &[], &cfg).unwrap();
        let init = init_params(&m.config, cfg.seed).unwrap();
        for ns in [
            "mlp.",
            "shared.j1.",
            "shared.j2.",
            "shared.j3.",
            "private.j1.",
            "private.j3.",
            "regressor.",
        ] {
            let changed = m
                .params
                .iter()
                .filter(|(n, _)| n.starts_with(ns))
                .any(|(n, t)| t != init.get(n).unwrap());
            assert!(changed, "no parameter under {ns} moved");
        }
    }

    #[test]
    fn ablations_shape_the_model() {
        let base = tiny_cfg();
        let data = vec![toy_windows(4, &base)];
        let no_con = TrainConfig {
            ablation: Ablation {
                use_contrastive: false,
                ..Ablation::default()
            },
            ..tiny_cfg()
        };
        let m = fit(&data, &[], &no_con).unwrap();
        assert!(m.params.names().all(|n| !n.starts_with("private.")));
        assert_eq!(m.config.num_devices(), 3);
        let single = TrainConfig {
            ablation: Ablation {
                use_aggregation: false,
                ..Ablation::default()
            },
            ..tiny_cfg()
        };
        let m = fit(&data, &[], &single).unwrap();
        assert_eq!(m.config.devices, vec!["watch".to_string()]);
        assert!(!m.config.with_private);
        assert!(m.log.epochs.iter().all(|e| e.con == 0.0));
    }

    #[test]
    fn nan_input_aborts_with_batch_location() {
        let cfg = TrainConfig {
            shuffle: false,
            ..tiny_cfg()
        };
        let mut w = toy_windows(4, &cfg);
        let per = w.windows.len() / w.len();
        w.windows.data_mut()[2 * per] = f32::NAN;
        let err = fit(&[w], &[], &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                TrainError::NonFinite {
                    epoch: 1,
                    batch: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn log_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = TrainLog {
            epochs: vec![EpochRecord {
                epoch: 1,
                total: 1.5,
                vel: 1.0,
                con: 2.0,
                orth: 0.5,
                val_mse: Some(0.25),
                seconds: 0.1,
            }],
        };
        log.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("epoch,total,vel,con,orth,val_mse,seconds\n1,1.5,1,2,0.5,0.25,0.100")
        );
    }
}

//! The multi-device velocity network.
//!
//! A window `[J, 6, L]` passes through a per-timestep two-layer MLP over all
//! `6J` channels, is split back into `J` blocks of `C` channels, and each
//! block goes through its device's shared extractor (and, when enabled, a
//! private extractor of the same shape). Shared features are averaged into
//! the aggregated feature `H^0`; one regressor maps any feature to a planar
//! velocity.

mod params;

pub use params::{init_params, ParamStore};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::IMU_CHANNELS;
use crate::tensor::{Reduction, Tape, Tensor, TensorError, Var};

pub const POOL_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter {name}: {reason}")]
    Param { name: String, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Device ids in window order; `J` is the length.
    pub devices: Vec<String>,
    /// Window length `L` in samples.
    pub window_len: usize,
    /// Channels per device after the shallow MLP (`C`).
    pub shallow_width: usize,
    pub conv_channels: [usize; 2],
    pub kernel_width: usize,
    /// Feature dimension `d`.
    pub feature_dim: usize,
    pub regressor_hidden: usize,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Whether private extractors exist.
    pub with_private: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            devices: vec!["phone".into(), "watch".into(), "earbuds".into()],
            window_len: 50,
            shallow_width: 16,
            conv_channels: [32, 64],
            kernel_width: 3,
            feature_dim: 64,
            regressor_hidden: 32,
            tau: 0.1,
            with_private: true,
        }
    }
}

impl ModelConfig {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetworkError::Config(m));
        if self.devices.is_empty() {
            return bad("at least one device is required".into());
        }
        let sizes = [
            ("shallow_width", self.shallow_width),
            ("conv_channels[0]", self.conv_channels[0]),
            ("conv_channels[1]", self.conv_channels[1]),
            ("feature_dim", self.feature_dim),
            ("regressor_hidden", self.regressor_hidden),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.kernel_width.is_multiple_of(2) {
            return bad(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            ));
        }
        if self.window_len < POOL_WINDOW * POOL_WINDOW {
            return bad(format!(
                "window_len {} is too short for two temporal poolings (need at least {})",
                self.window_len,
                POOL_WINDOW * POOL_WINDOW
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }
}

/// Extractor features of one window, as tape variables.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    /// `H^j`, one `[d]` vector per device.
    pub shared: Vec<Var>,
    /// `H^j_pr`; empty when private extractors are disabled.
    pub private: Vec<Var>,
    /// `H^0`, the mean of `shared`.
    pub aggregated: Var,
}

/// Forward output: features and the `J + 1` velocity heads, head 0 being the
/// aggregated one.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub features: FeatureBundle,
    pub velocities: Vec<Var>,
}

/// A parameter store placed on a tape.
#[derive(Debug)]
pub struct Model<'a> {
    pub config: &'a ModelConfig,
    vars: std::collections::BTreeMap<String, Var>,
}

impl<'a> Model<'a> {
    /// Records every parameter as a leaf. With `trainable` false the leaves
    /// are constants and backward bookkeeping is skipped.
    pub fn bind(
        tape: &mut Tape,
        config: &'a ModelConfig,
        store: &ParamStore,
        trainable: bool,
    ) -> Result<Self> {
        config.validate()?;
        store.check_against(config)?;
        let vars = store
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), trainable)))
            .collect();
        Ok(Self { config, vars })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::Param {
                name: name.to_string(),
                reason: "missing from parameter store".into(),
            })
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// `[J, 6, L]` window to `J` blocks `Z^j` of shape `[C, L]`.
    pub fn forward_shallow(&self, tape: &mut Tape, window: Var) -> Result<Vec<Var>> {
        let cfg = self.config;
        let (j, l, c) = (cfg.num_devices(), cfg.window_len, cfg.shallow_width);
        let want = [j, IMU_CHANNELS, l];
        if tape.value(window).shape() != want {
            return Err(TensorError::Dimension {
                op: "forward_shallow",
                lhs: tape.value(window).shape().to_vec(),
                rhs: want.to_vec(),
            }
            .into());
        }
        let x = tape.reshape(window, &[j * IMU_CHANNELS, l])?;
        let x = tape.transpose(x)?;
        let h = tape.matmul(x, self.var("mlp.w1")?)?;
        let h = tape.add_bias(h, self.var("mlp.b1")?)?;
        let h = tape.relu(h);
        let z = tape.matmul(h, self.var("mlp.w2")?)?;
        let z = tape.add_bias(z, self.var("mlp.b2")?)?;
        let z = tape.transpose(z)?;
        (0..j).map(|d| Ok(tape.narrow(z, 0, d * c, c)?)).collect()
    }

    fn extractor(&self, tape: &mut Tape, z: Var, prefix: &str) -> Result<Var> {
        let cfg = self.config;
        let (c, l) = (cfg.shallow_width, cfg.window_len);
        let p = |s: &str| self.var(&format!("{prefix}.{s}"));
        let x = tape.reshape(z, &[1, c, l])?;
        let x = tape.conv2d(x, p("conv1.weight")?, Some(p("conv1.bias")?))?;
        let x = tape.maxpool_temporal(x, POOL_WINDOW)?;
        let x = tape.relu(x);
        let x = tape.conv2d(x, p("conv2.weight")?, Some(p("conv2.bias")?))?;
        let x = tape.maxpool_temporal(x, POOL_WINDOW)?;
        let x = tape.relu(x);
        let w = tape.value(x).shape()[2];
        let x = tape.reshape(x, &[cfg.conv_channels[1] * c, w])?;
        let x = tape.transpose(x)?;
        let x = tape.matmul(x, p("dense.weight")?)?;
        let x = tape.add_bias(x, p("dense.bias")?)?;
        Ok(tape.reduce(x, Reduction::Mean, 0)?)
    }

    fn check_device(&self, j: usize) -> Result<()> {
        let n = self.config.num_devices();
        if j == 0 || j > n {
            return Err(NetworkError::Config(format!(
                "device index {j} outside 1..={n}"
            )));
        }
        Ok(())
    }

    /// `H^j` for device `j` (1-based).
    pub fn forward_shared(&self, tape: &mut Tape, z: Var, j: usize) -> Result<Var> {
        self.check_device(j)?;
        self.extractor(tape, z, &format!("shared.j{j}"))
    }

    /// `H^j_pr` for device `j` (1-based).
    pub fn forward_private(&self, tape: &mut Tape, z: Var, j: usize) -> Result<Var> {
        self.check_device(j)?;
        if !self.config.with_private {
            return Err(NetworkError::Config(
                "model has no private extractors".into(),
            ));
        }
        self.extractor(tape, z, &format!("private.j{j}"))
    }

    /// The shared regressor `d -> hidden -> 2`.
    pub fn regress_velocity(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let d = self.config.feature_dim;
        if tape.value(h).shape() != [d] {
            return Err(TensorError::Dimension {
                op: "regress_velocity",
                lhs: tape.value(h).shape().to_vec(),
                rhs: vec![d],
            }
            .into());
        }
        let x = tape.reshape(h, &[1, d])?;
        let x = tape.matmul(x, self.var("regressor.w1")?)?;
        let x = tape.add_bias(x, self.var("regressor.b1")?)?;
        let x = tape.relu(x);
        let x = tape.matmul(x, self.var("regressor.w2")?)?;
        let x = tape.add_bias(x, self.var("regressor.b2")?)?;
        Ok(tape.reshape(x, &[2])?)
    }

    /// Full forward pass. Private extractors run only if `with_private` is
    /// set and the model has them.
    pub fn forward(
        &self,
        tape: &mut Tape,
        window: Var,
        with_private: bool,
    ) -> Result<ForwardOutput> {
        let zs = self.forward_shallow(tape, window)?;
        let mut shared = Vec::with_capacity(zs.len());
        let mut private = Vec::new();
        for (i, &z) in zs.iter().enumerate() {
            shared.push(self.forward_shared(tape, z, i + 1)?);
            if with_private && self.config.with_private {
                private.push(self.forward_private(tape, z, i + 1)?);
            }
        }
        let aggregated = aggregate(tape, &shared)?;
        let mut velocities = vec![self.regress_velocity(tape, aggregated)?];
        for &h in &shared {
            velocities.push(self.regress_velocity(tape, h)?);
        }
        Ok(ForwardOutput {
            features: FeatureBundle {
                shared,
                private,
                aggregated,
            },
            velocities,
        })
    }
}

/// Elementwise mean of the shared features.
pub fn aggregate(tape: &mut Tape, shared: &[Var]) -> Result<Var> {
    if shared.is_empty() {
        return Err(TensorError::Degenerate {
            op: "aggregate",
            reason: "no features to aggregate".into(),
        }
        .into());
    }
    if shared.len() == 1 {
        return Ok(shared[0]);
    }
    let s = tape.stack(shared)?;
    Ok(tape.reduce(s, Reduction::Mean, 0)?)
}

/// Aggregated-head velocity for one `[J, 6, L]` window, without gradients.
pub fn predict(config: &ModelConfig, store: &ParamStore, window: &Tensor) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let model = Model::bind(&mut tape, config, store, false)?;
    let x = tape.constant(window.clone());
    let zs = model.forward_shallow(&mut tape, x)?;
    let shared = zs
        .iter()
        .enumerate()
        .map(|(i, &z)| model.forward_shared(&mut tape, z, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let h0 = aggregate(&mut tape, &shared)?;
    let v = model.regress_velocity(&mut tape, h0)?;
    let d = tape.value(v).data();
    Ok([d[0] as f64, d[1] as f64])
}

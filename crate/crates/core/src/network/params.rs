use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, NetworkError, Result};
use crate::dataio::IMU_CHANNELS;
use crate::tensor::Tensor;

/// Named model parameters in name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    /// Zero for biases.
    fan_in: usize,
}

fn specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let j = cfg.num_devices();
    let (c, d, h, kw) = (
        cfg.shallow_width,
        cfg.feature_dim,
        cfg.regressor_hidden,
        cfg.kernel_width,
    );
    let [c1, c2] = cfg.conv_channels;
    let w = |name: String, shape: Vec<usize>, fan_in| ParamSpec {
        name,
        shape,
        fan_in,
    };
    let b = |name: String, n: usize| ParamSpec {
        name,
        shape: vec![n],
        fan_in: 0,
    };
    let mut out = vec![
        w(
            "mlp.w1".into(),
            vec![IMU_CHANNELS * j, c * j],
            IMU_CHANNELS * j,
        ),
        b("mlp.b1".into(), c * j),
        w("mlp.w2".into(), vec![c * j, c * j], c * j),
        b("mlp.b2".into(), c * j),
        w("regressor.w1".into(), vec![d, h], d),
        b("regressor.b1".into(), h),
        w("regressor.w2".into(), vec![h, 2], h),
        b("regressor.b2".into(), 2),
    ];
    let mut branches = vec!["shared"];
    if cfg.with_private {
        branches.push("private");
    }
    for branch in branches {
        for dev in 1..=j {
            let p = format!("{branch}.j{dev}");
            out.push(w(format!("{p}.conv1.weight"), vec![c1, 1, 1, kw], kw));
            out.push(b(format!("{p}.conv1.bias"), c1));
            out.push(w(format!("{p}.conv2.weight"), vec![c2, c1, 1, kw], c1 * kw));
            out.push(b(format!("{p}.conv2.bias"), c2));
            out.push(w(format!("{p}.dense.weight"), vec![c2 * c, d], c2 * c));
            out.push(b(format!("{p}.dense.bias"), d));
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Fan-in scaled uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))` and
/// zero biases, drawn in name order from one seeded stream.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::default();
    for s in specs(cfg) {
        let n = s.shape.iter().product();
        let data = if s.fan_in == 0 {
            vec![0.0; n]
        } else {
            let bound = (6.0 / s.fan_in as f64).sqrt() as f32;
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        store.insert(s.name, Tensor::new(s.shape, data)?);
    }
    Ok(store)
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Checks names and shapes against what `cfg` expects, naming the first
    /// offending tensor.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = specs(cfg);
        for s in &expected {
            match self.tensors.get(&s.name) {
                None => {
                    return Err(NetworkError::Param {
                        name: s.name.clone(),
                        reason: "missing".into(),
                    })
                }
                Some(t) if t.shape() != s.shape => {
                    return Err(NetworkError::Param {
                        name: s.name.clone(),
                        reason: format!("shape {:?}, expected {:?}", t.shape(), s.shape),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = self
            .names()
            .find(|n| !expected.iter().any(|s| s.name == *n))
        {
            return Err(NetworkError::Param {
                name: extra.to_string(),
                reason: "not part of this model".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_counts() {
        let cfg = ModelConfig::default();
        let store = init_params(&cfg, 0).unwrap();
        // 8 mlp/regressor tensors, 6 per extractor, 6 extractors
        assert_eq!(store.len(), 8 + 6 * 6);
        assert!(store.get("shared.j3.dense.weight").is_some());
        assert!(store.get("private.j1.conv2.bias").is_some());
        assert_eq!(store.get("mlp.w1").unwrap().shape(), &[18, 48]);
        let no_private = init_params(
            &ModelConfig {
                with_private: false,
                ..cfg
            },
            0,
        )
        .unwrap();
        assert!(no_private.names().all(|n| !n.starts_with("private.")));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, 5).unwrap();
        assert_eq!(a, init_params(&cfg, 5).unwrap());
        assert_ne!(a, init_params(&cfg, 6).unwrap());
        let w = a.get("mlp.w1").unwrap();
        let bound = (6.0f32 / 18.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert!(a.get("mlp.b1").unwrap().data().iter().all(|&v| v == 0.0));
        assert_ne!(
            a.get("private.j1.conv1.weight"),
            a.get("shared.j1.conv1.weight")
        );
    }

    #[test]
    fn shape_check_names_the_tensor() {
        let three = ModelConfig::default();
        let two = ModelConfig {
            devices: vec!["phone".into(), "watch".into()],
            ..ModelConfig::default()
        };
        let store = init_params(&three, 1).unwrap();
        let err = store.check_against(&two).unwrap_err().to_string();
        assert!(err.contains("mlp.b1") && err.contains("[48]"), "{err}");
    }
}

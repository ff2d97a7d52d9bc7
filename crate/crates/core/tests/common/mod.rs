//! Independent f64 reference implementations used as test oracles. Written
//! from the model description with plain loops; nothing here calls the tape.

#![allow(dead_code, clippy::too_many_arguments)]

use std::collections::BTreeMap;

use suitein_core::network::ModelConfig;

/// Records which side of every kink (ReLU sign, max-pool winner) a forward
/// pass took, so a finite difference straddling a kink can be detected.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Kinks(pub Vec<u32>);

impl Kinks {
    pub fn relu(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                self.0.push((v > 0.0) as u32);
                v.max(0.0)
            })
            .collect()
    }

    /// Non-overlapping max over pairs along the last axis of `rows x w`.
    pub fn maxpool2(&mut self, x: &[f64], rows: usize, w: usize) -> Vec<f64> {
        let wo = w / 2;
        let mut out = Vec::with_capacity(rows * wo);
        for r in 0..rows {
            for k in 0..wo {
                let (a, b) = (x[r * w + 2 * k], x[r * w + 2 * k + 1]);
                self.0.push((b > a) as u32);
                out.push(if b > a { b } else { a });
            }
        }
        out
    }
}

/// `[rows, k] x [k, cols]`.
pub fn matmul(a: &[f64], b: &[f64], rows: usize, k: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = (0..k).map(|t| a[i * k + t] * b[t * cols + j]).sum();
        }
    }
    out
}

/// Same-padded temporal cross-correlation: `x [cin, h, w]`,
/// `kernel [cout, cin, 1, kw]`, bias `[cout]`.
pub fn conv(
    x: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kw: usize,
) -> Vec<f64> {
    let half = (kw / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        for r in 0..h {
            for t in 0..w {
                let mut acc = bias.map_or(0.0, |b| b[co]);
                for ci in 0..cin {
                    for q in 0..kw {
                        let src = t as isize + q as isize - half;
                        if src >= 0 && (src as usize) < w {
                            acc += kernel[(co * cin + ci) * kw + q]
                                * x[(ci * h + r) * w + src as usize];
                        }
                    }
                }
                out[(co * h + r) * w + t] = acc;
            }
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Velocity loss: mean over heads of the per-head mean squared error.
pub fn velocity_loss(heads: &[[f64; 2]], target: [f64; 2]) -> f64 {
    let mut sum = 0.0;
    for h in heads {
        sum += ((h[0] - target[0]).powi(2) + (h[1] - target[1]).powi(2)) / 2.0;
    }
    sum / heads.len() as f64
}

/// InfoNCE written term by term: for each device the positive pair is the
/// aggregate with that device's shared feature; negatives are the aggregate
/// with every private feature and every unordered private pair.
pub fn contrastive_loss(shared: &[Vec<f64>], private: &[Vec<f64>], agg: &[f64], tau: f64) -> f64 {
    let s = |a: &[f64], b: &[f64]| (cosine(a, b) / tau).exp();
    let mut neg = 0.0;
    for p in private {
        neg += s(agg, p);
    }
    for i in 0..private.len() {
        for k in i + 1..private.len() {
            neg += s(&private[i], &private[k]);
        }
    }
    let mut total = 0.0;
    for h in shared {
        let pos = s(agg, h);
        total -= (pos / (pos + neg)).ln();
    }
    total
}

/// Literal orthogonality sum; `clamped` takes `max(0, cos)` per term.
pub fn orthogonality_loss(shared: &[Vec<f64>], private: &[Vec<f64>], clamped: bool) -> f64 {
    let f = |c: f64| if clamped { c.max(0.0) } else { c };
    let mut total = 0.0;
    for i in 0..private.len() {
        for k in i + 1..private.len() {
            total += f(cosine(&private[i], &private[k]));
        }
    }
    for (h, p) in shared.iter().zip(private) {
        total += f(cosine(h, p));
    }
    total
}

pub type Params = BTreeMap<String, Vec<f64>>;

pub fn params_f64(store: &suitein_core::network::ParamStore) -> Params {
    store
        .iter()
        .map(|(k, t)| (k.clone(), t.data().iter().map(|&v| v as f64).collect()))
        .collect()
}

pub struct Forward {
    pub shared: Vec<Vec<f64>>,
    pub private: Vec<Vec<f64>>,
    pub aggregated: Vec<f64>,
    /// Aggregated head first, then one per device.
    pub velocities: Vec<[f64; 2]>,
}

fn extract(cfg: &ModelConfig, p: &Params, prefix: &str, z: &[f64], kinks: &mut Kinks) -> Vec<f64> {
    let (c, l, kw) = (cfg.shallow_width, cfg.window_len, cfg.kernel_width);
    let [c1, c2] = cfg.conv_channels;
    let d = cfg.feature_dim;
    let get = |s: &str| &p[&format!("{prefix}.{s}")];
    let x = conv(
        z,
        get("conv1.weight"),
        Some(get("conv1.bias")),
        1,
        c1,
        c,
        l,
        kw,
    );
    let x = kinks.maxpool2(&x, c1 * c, l);
    let x = kinks.relu(&x);
    let w1 = l / 2;
    let x = conv(
        &x,
        get("conv2.weight"),
        Some(get("conv2.bias")),
        c1,
        c2,
        c,
        w1,
        kw,
    );
    let x = kinks.maxpool2(&x, c2 * c, w1);
    let x = kinks.relu(&x);
    let w2 = w1 / 2;
    // one row per time step, columns ordered (channel, sensor row)
    let rows = c2 * c;
    let mut xt = vec![0.0; w2 * rows];
    for r in 0..rows {
        for t in 0..w2 {
            xt[t * rows + r] = x[r * w2 + t];
        }
    }
    let y = matmul(&xt, get("dense.weight"), w2, rows, d);
    let b = get("dense.bias");
    (0..d)
        .map(|k| (0..w2).map(|t| y[t * d + k] + b[k]).sum::<f64>() / w2 as f64)
        .collect()
}

fn regress(cfg: &ModelConfig, p: &Params, h: &[f64], kinks: &mut Kinks) -> [f64; 2] {
    let (d, hid) = (cfg.feature_dim, cfg.regressor_hidden);
    let mut a = matmul(h, &p["regressor.w1"], 1, d, hid);
    for (v, b) in a.iter_mut().zip(&p["regressor.b1"]) {
        *v += b;
    }
    let a = kinks.relu(&a);
    let o = matmul(&a, &p["regressor.w2"], 1, hid, 2);
    [o[0] + p["regressor.b2"][0], o[1] + p["regressor.b2"][1]]
}

/// Reference forward pass of one `[J, 6, L]` window.
pub fn forward(cfg: &ModelConfig, p: &Params, window: &[f64], kinks: &mut Kinks) -> Forward {
    let (j, c, l) = (cfg.num_devices(), cfg.shallow_width, cfg.window_len);
    let (din, dmid) = (6 * j, c * j);
    // per time step: gather all channels of all devices
    let mut xt = vec![0.0; l * din];
    for ch in 0..din {
        for t in 0..l {
            xt[t * din + ch] = window[ch * l + t];
        }
    }
    let mut h = matmul(&xt, &p["mlp.w1"], l, din, dmid);
    for t in 0..l {
        for k in 0..dmid {
            h[t * dmid + k] += p["mlp.b1"][k];
        }
    }
    let h = kinks.relu(&h);
    let mut z = matmul(&h, &p["mlp.w2"], l, dmid, dmid);
    for t in 0..l {
        for k in 0..dmid {
            z[t * dmid + k] += p["mlp.b2"][k];
        }
    }
    let mut shared = Vec::new();
    let mut private = Vec::new();
    for dev in 0..j {
        let mut block = vec![0.0; c * l];
        for r in 0..c {
            for t in 0..l {
                block[r * l + t] = z[t * dmid + dev * c + r];
            }
        }
        shared.push(extract(
            cfg,
            p,
            &format!("shared.j{}", dev + 1),
            &block,
            kinks,
        ));
        if cfg.with_private {
            private.push(extract(
                cfg,
                p,
                &format!("private.j{}", dev + 1),
                &block,
                kinks,
            ));
        }
    }
    let d = cfg.feature_dim;
    let aggregated: Vec<f64> = (0..d)
        .map(|k| shared.iter().map(|s| s[k]).sum::<f64>() / j as f64)
        .collect();
    let mut velocities = vec![regress(cfg, p, &aggregated, kinks)];
    for s in &shared {
        velocities.push(regress(cfg, p, s, kinks));
    }
    Forward {
        shared,
        private,
        aggregated,
        velocities,
    }
}

/// Weighted window loss with the default weights (1, 0.2, 0.05) and literal
/// orthogonality.
pub fn window_loss(
    cfg: &ModelConfig,
    p: &Params,
    window: &[f64],
    target: [f64; 2],
    kinks: &mut Kinks,
) -> f64 {
    let f = forward(cfg, p, window, kinks);
    let vel = velocity_loss(&f.velocities, target);
    let con = contrastive_loss(&f.shared, &f.private, &f.aggregated, cfg.tau);
    let orth = orthogonality_loss(&f.shared, &f.private, false);
    vel + 0.2 * con + 0.05 * orth
}

/// Relative error with a floor on the denominator so that two tiny values
/// compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

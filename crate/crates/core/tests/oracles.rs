mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suitein_core::evaluator::{ate, rte, Trajectory};
use suitein_core::network::{init_params, Model, ModelConfig, ParamStore};
use suitein_core::trainer::{Adam, AdamConfig};
use suitein_core::{Tape, Tensor};

fn random_walk(r: &mut ChaCha8Rng, n: usize, t0: f64) -> Trajectory {
    let mut t = t0;
    let mut p = [0.0, 0.0];
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    for _ in 0..n {
        t += r.random_range(0.05..0.3);
        p[0] += r.random_range(-1.0..1.0);
        p[1] += r.random_range(-1.0..1.0);
        ts.push(t);
        ps.push(p);
    }
    Trajectory::new(ts, ps).unwrap()
}

fn lerp(tr: &Trajectory, t: f64) -> Option<[f64; 2]> {
    let (ts, ps) = (tr.timestamps(), tr.positions());
    if t < ts[0] || t > ts[ts.len() - 1] {
        return None;
    }
    for i in 0..ts.len() - 1 {
        if t <= ts[i + 1] {
            let a = (t - ts[i]) / (ts[i + 1] - ts[i]);
            return Some([
                ps[i][0] + a * (ps[i + 1][0] - ps[i][0]),
                ps[i][1] + a * (ps[i + 1][1] - ps[i][1]),
            ]);
        }
    }
    Some(ps[ps.len() - 1])
}

#[test]
fn ate_matches_rmse_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let gt = random_walk(&mut r, 200, 0.0);
        let t0 = r.random_range(-2.0..2.0);
        let pred = random_walk(&mut r, 150, t0);
        let mut sq = Vec::new();
        for (&t, p) in pred.timestamps().iter().zip(pred.positions()) {
            if let Some(g) = lerp(&gt, t) {
                sq.push((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2));
            }
        }
        let want = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        let got = ate(&pred, &gt).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn rte_matches_interval_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let gt = random_walk(&mut r, 300, 0.0);
        let t0 = r.random_range(0.0..1.0);
        let pred = random_walk(&mut r, 250, t0);
        let interval = r.random_range(1.0..8.0);
        let start = pred.timestamps()[0].max(gt.timestamps()[0]);
        let end = pred.span().1.min(gt.span().1);
        let mut errs = Vec::new();
        let mut a = start;
        while a + interval <= end + 1e-9 {
            let b = (a + interval).min(end);
            let (p0, p1) = (lerp(&pred, a).unwrap(), lerp(&pred, b).unwrap());
            let (g0, g1) = (lerp(&gt, a).unwrap(), lerp(&gt, b).unwrap());
            errs.push(((p1[0] - p0[0]) - (g1[0] - g0[0])).hypot((p1[1] - p0[1]) - (g1[1] - g0[1])));
            a += interval;
        }
        let want = errs.iter().sum::<f64>() / errs.len() as f64;
        let got = rte(&pred, &gt, interval).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

fn small_model(devices: &[&str]) -> ModelConfig {
    ModelConfig {
        devices: devices.iter().map(|s| s.to_string()).collect(),
        window_len: 16,
        shallow_width: 4,
        conv_channels: [4, 6],
        feature_dim: 8,
        regressor_hidden: 8,
        ..ModelConfig::default()
    }
}

fn values(tape: &Tape, v: suitein_core::tensor::Var) -> Vec<f64> {
    tape.value(v).data().iter().map(|&x| x as f64).collect()
}

fn close(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len(), "{what}");
    for (x, y) in a.iter().zip(b) {
        assert!(common::rel_err(*x, *y) < 1e-4, "{what}: {x} vs {y}");
    }
}

#[test]
fn network_forward_matches_reference() {
    for (seed, devices) in [
        (1, vec!["phone"]),
        (2, vec!["phone", "watch"]),
        (3, vec!["phone", "watch", "earbuds"]),
    ] {
        let cfg = small_model(&devices);
        let params = init_params(&cfg, seed).unwrap();
        let j = devices.len();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let window: Vec<f32> = (0..j * 6 * cfg.window_len)
            .map(|_| r.random_range(-3.0..3.0))
            .collect();

        let mut tape = Tape::new();
        let model = Model::bind(&mut tape, &cfg, &params, false).unwrap();
        let x = tape.constant(Tensor::new(vec![j, 6, cfg.window_len], window.clone()).unwrap());
        let out = model.forward(&mut tape, x, true).unwrap();

        let w64: Vec<f64> = window.iter().map(|&v| v as f64).collect();
        let want = common::forward(
            &cfg,
            &common::params_f64(&params),
            &w64,
            &mut common::Kinks::default(),
        );
        for k in 0..j {
            close(
                &values(&tape, out.features.shared[k]),
                &want.shared[k],
                "shared",
            );
            close(
                &values(&tape, out.features.private[k]),
                &want.private[k],
                "private",
            );
        }
        close(
            &values(&tape, out.features.aggregated),
            &want.aggregated,
            "aggregated",
        );
        for (v, w) in out.velocities.iter().zip(&want.velocities) {
            close(&values(&tape, *v), w, "velocity");
        }
    }
}

#[test]
fn adam_two_steps_by_hand() {
    let cfg = AdamConfig::default();
    let mut params = ParamStore::new();
    params.insert("w", Tensor::from_vec(vec![0.5, -1.0, 2.0]));
    let g1 = [0.1f64, -0.4, 0.0];
    let g2 = [0.3f64, 0.2, -0.05];
    let lr = 0.01;
    let mut adam = Adam::new(cfg);
    for g in [g1, g2] {
        let grads = BTreeMap::from([(
            "w".to_string(),
            Tensor::from_vec(g.iter().map(|&v| v as f32).collect()),
        )]);
        adam.step(&mut params, &grads, lr);
    }

    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
    let mut w = [0.5f64, -1.0, 2.0];
    let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
    for (t, g) in [g1, g2].iter().enumerate() {
        let t = t as i32 + 1;
        for i in 0..3 {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            w[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    let got = params.get("w").unwrap().data();
    for i in 0..3 {
        assert!(
            (got[i] as f64 - w[i]).abs() < 1e-6,
            "{i}: {} vs {}",
            got[i],
            w[i]
        );
    }
    assert_eq!(adam.steps_taken(), 2);
}

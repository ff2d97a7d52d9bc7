use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suitein_core::dataio::prepare_windows;
use suitein_core::network::init_params;
use suitein_core::simkit::simulate;
use suitein_core::trainer::batch_gradients;
use suitein_core::{ModelConfig, SimConfig, Tape, Tensor, TrainConfig};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&[16, 8, 50], &mut rng);
    let k = random(&[32, 16, 1, 3], &mut rng);
    let b = random(&[32], &mut rng);
    c.bench_function("conv2d forward 16x8x50 -> 32", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let (xv, kv, bv) = (
                tape.constant(x.clone()),
                tape.constant(k.clone()),
                tape.constant(b.clone()),
            );
            tape.conv2d(xv, kv, Some(bv)).unwrap()
        })
    });
    c.bench_function("conv2d forward+backward 16x8x50 -> 32", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let (xv, kv, bv) = (
                tape.param(x.clone()),
                tape.param(k.clone()),
                tape.param(b.clone()),
            );
            let y = tape.conv2d(xv, kv, Some(bv)).unwrap();
            let s = tape.sum(y).unwrap();
            tape.backward(s).unwrap()
        })
    });
}

fn training_step(c: &mut Criterion) {
    let cfg = TrainConfig {
        model: ModelConfig {
            shallow_width: 8,
            conv_channels: [8, 16],
            feature_dim: 32,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let sim = simulate(&SimConfig {
        duration_s: 20.0,
        ..SimConfig::default()
    })
    .unwrap();
    let windows = prepare_windows(&sim.bundle, cfg.window).unwrap();
    let model = cfg.resolve_model(&windows.device_ids).unwrap();
    let params = init_params(&model, 0).unwrap();
    let examples: Vec<(Tensor, [f32; 2])> = (0..16)
        .map(|i| {
            let t = windows.targets[i];
            (windows.window(i), [t[0] as f32, t[1] as f32])
        })
        .collect();
    c.bench_function("batch of 16 windows, loss and gradients", |bench| {
        bench.iter(|| batch_gradients(&model, &params, &examples, &cfg).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let cfg = SimConfig {
        duration_s: 10.0,
        ..SimConfig::default()
    };
    c.bench_function("simulate 10 s, three devices", |bench| {
        bench.iter_batched(
            || cfg.clone(),
            |cfg| simulate(&cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, conv, training_step, simulation);
criterion_main!(benches);

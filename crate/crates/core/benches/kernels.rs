use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use randpad_core::datasets::LabeledDataset;
use randpad_core::exec;
use randpad_core::nn::{build_model, conv2d, conv2d_backward, Architecture, ModelConfig};
use randpad_core::train::{train_classifier, TrainConfig};
use randpad_core::{RngStream, Tensor};

fn normal(shape: [usize; 4], seed: u64) -> Tensor {
    let mut rng = RngStream::derive(seed, "bench", 0, 0);
    Tensor::from_fn(shape, |_| rng.normal() as f32)
}

const MODES: [(&str, bool); 2] = [("sequential", true), ("parallel", false)];

fn conv(c: &mut Criterion) {
    let x = normal([64, 16, 16, 16], 1);
    let w = normal([32, 16, 3, 3], 2);
    let b = vec![0.0; 32];
    let out = conv2d(&x, &w, &b, 1).unwrap();
    let g = normal(out.shape(), 3);
    let mut group = c.benchmark_group("conv2d_64x16x16x16_k3");
    for (name, seq) in MODES {
        exec::set_sequential(seq);
        group.bench_function(BenchmarkId::new("forward", name), |bch| {
            bch.iter(|| conv2d(black_box(&x), &w, &b, 1).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward", name), |bch| {
            bch.iter(|| conv2d_backward(black_box(&x), &w, &g, 1).unwrap())
        });
    }
    exec::set_sequential(false);
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let images = normal([256, 1, 28, 28], 4);
    let labels = (0..256).map(|i| i % 10).collect();
    let ds = LabeledDataset::new(images, labels, 10).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        lr: 0.01,
        augment: "rc,rf".parse().unwrap(),
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("cnn_lite_rp2_epoch_256");
    group.sample_size(10);
    for (name, seq) in MODES {
        exec::set_sequential(seq);
        group.bench_function(name, |bch| {
            bch.iter(|| {
                let mut m = build_model(&ModelConfig {
                    arch: Architecture::CnnLite,
                    rp_layers: 2,
                    class_count: 10,
                    input: [1, 28, 28],
                    init_seed: 1,
                })
                .unwrap();
                train_classifier(&mut m, &ds, None, &cfg, |_| {}).unwrap()
            })
        });
    }
    exec::set_sequential(false);
    group.finish();
}

criterion_group!(benches, conv, train_epoch);
criterion_main!(benches);

//! Sequential-vs-parallel throughput on the two data-parallel hot paths:
//! batch crop scoring and one training epoch. The same work runs under a
//! 1-thread executor and, when the `parallel` feature is enabled, a
//! 4-thread rayon pool; results are byte-identical either way, so the bench
//! is purely about wall clock.
//!
//! Build without the feature (`cargo bench --no-default-features`) to
//! measure the sequential fallback on its own.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hlcnn_core::data::{Cuboid, LabeledSample};
use hlcnn_core::nn::{ArchConfig, Model};
use hlcnn_core::optim::{train, TrainConfig};
use hlcnn_core::synth::{gen_cuboid, SynthClass, SynthConfig};
use hlcnn_core::{hl, Executor};

const DIMS: [usize; 4] = [1, 32, 32, 10];

fn bench_arch() -> ArchConfig {
    ArchConfig::small_synthetic()
}

fn make_cuboids(n: usize) -> Vec<Cuboid<f32>> {
    (0..n)
        .map(|i| {
            let class = if i % 2 == 0 {
                SynthClass::Calm
            } else {
                SynthClass::Excited
            };
            let cuboid = gen_cuboid(&SynthConfig::new(DIMS, class, i as u64)).unwrap();
            Cuboid {
                data: cuboid.data.cast(),
                grid_x: i % 7,
                grid_y: i / 7,
                t0: 0,
            }
        })
        .collect()
}

fn make_samples(n: usize) -> Vec<LabeledSample<f32>> {
    make_cuboids(n)
        .into_iter()
        .enumerate()
        .map(|(i, cuboid)| LabeledSample {
            cuboid,
            label: (i % 2) as u8,
        })
        .collect()
}

fn executors() -> Vec<(String, Executor)> {
    let mut out = vec![("threads-1".to_owned(), Executor::new(1).unwrap())];
    if cfg!(feature = "parallel") {
        out.push(("threads-4".to_owned(), Executor::new(4).unwrap()));
    }
    out
}

fn bench_score_crops(c: &mut Criterion) {
    let model = Model::<f32>::init(bench_arch(), 1).unwrap();
    let cuboids = make_cuboids(28);
    let mut group = c.benchmark_group("score_crops_28");
    group.sample_size(20);
    for (name, exec) in executors() {
        group.bench_function(&name, |b| {
            b.iter(|| hl::score_crops(&model, &cuboids, &exec).unwrap())
        });
    }
    group.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    let samples = make_samples(64);
    let config = TrainConfig {
        max_epochs: 1,
        batch_size: 16,
        seed: 3,
        ..Default::default()
    };
    let mut group = c.benchmark_group("train_epoch_64");
    group.sample_size(10);
    for (name, exec) in executors() {
        group.bench_function(&name, |b| {
            b.iter_batched(
                || Model::<f32>::init(bench_arch(), 3).unwrap(),
                |mut model| train(&mut model, &config, &samples, &samples[..8], &exec).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn bench_forward_single(c: &mut Criterion) {
    let model = Model::<f32>::init(bench_arch(), 5).unwrap();
    let cuboids = make_cuboids(1);
    c.bench_function("forward_infer_single", |b| {
        b.iter(|| model.forward_infer(&cuboids[0].data).unwrap())
    });
}

criterion_group!(
    benches,
    bench_score_crops,
    bench_train_epoch,
    bench_forward_single
);
criterion_main!(benches);

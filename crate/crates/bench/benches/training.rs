use std::hint::black_box;

use aircomp_dp::aircomp::aggregate_round;
use aircomp_dp::fl::{local_train, synth_dataset, Activation, Mlp, TrainingConfig};
use aircomp_dp::privacy::ClippedUpdate;
use aircomp_dp::{Seed, SystemParams};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_local_train(c: &mut Criterion) {
    let data = synth_dataset(&mut Seed(1).rng(), 600, 10, 10, 1.0).unwrap();
    let config = TrainingConfig::default();
    let mut group = c.benchmark_group("local_train_epoch");
    for (name, hidden) in [("linear", vec![]), ("hidden32", vec![32])] {
        let model = Mlp::new(10, &hidden, 10, Activation::Relu);
        let theta = model.init(&mut Seed(2).rng());
        group.bench_function(name, |b| {
            b.iter(|| local_train(&model, black_box(&theta), &data, &config, 1, &mut Seed(3).rng()).unwrap())
        });
    }
    group.finish();
}

fn bench_aggregate_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregate_round");
    for (clients, slots) in [(5usize, 110usize), (100, 110), (100, 7_850)] {
        let params = SystemParams::reference(clients);
        let s = ClippedUpdate::constant(clients, slots, 5e-5);
        group.bench_function(format!("{clients}x{slots}"), |b| {
            b.iter(|| aggregate_round(black_box(&s), 0.15, &params, &mut Seed(4).rng()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_local_train, bench_aggregate_round);
criterion_main!(benches);

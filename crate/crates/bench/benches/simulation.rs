use std::hint::black_box;

use aircomp_dp::aircomp::{measure_snr, SymbolSource};
use aircomp_dp::channel::draw_channel;
use aircomp_dp::privacy::rho_star_star;
use aircomp_dp::{PowerPolicy, PrivacyTarget, Seed, SystemParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_rho_star_star(c: &mut Criterion) {
    let target = PrivacyTarget::new(0.01, 0.1, 5e-5).unwrap();
    let mut group = c.benchmark_group("rho_star_star");
    for n in [5usize, 100] {
        let params = SystemParams::reference(n);
        let draw = draw_channel(&mut Seed(1).rng(), &params);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| rho_star_star(black_box(&params), &target, black_box(&draw)))
        });
    }
    group.finish();
}

fn bench_measure_snr(c: &mut Criterion) {
    let target = PrivacyTarget::new(0.01, 0.1, 5e-5).unwrap();
    let trials = 10_000;
    let mut group = c.benchmark_group("measure_snr");
    group.throughput(Throughput::Elements(trials));
    group.sample_size(20);
    for n in [5usize, 100] {
        let params = SystemParams::reference(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                measure_snr(
                    &params,
                    &target,
                    PowerPolicy::DpStarStar,
                    trials,
                    Seed(2),
                    SymbolSource::Saturated,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rho_star_star, bench_measure_snr);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qicorr::correlator::{correlogram, correlogram_par, CorrelogramConfig};
use qicorr::detector::TimestampStream;

fn ticks(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // about 1e6 events per second on 81 ps ticks
    let mean_gap = 1.0e-6 / 81e-12;
    let mut t = 0.0f64;
    (0..n)
        .map(|_| {
            t += -mean_gap * (1.0 - rng.random::<f64>()).ln();
            t as u64
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let n = 1_000_000;
    let (a, b) = (ticks(1, n), ticks(2, n));
    let end = a[n - 1].max(b[n - 1]) + 1;
    let s = TimestampStream::new(a, 0, 81, end);
    let r = TimestampStream::new(b, 1, 81, end);
    let grid = CorrelogramConfig::new(4, -151, 249).unwrap();

    let mut group = c.benchmark_group("correlogram");
    group.throughput(Throughput::Elements(2 * n as u64));
    group.sample_size(20);
    group.bench_function("sequential", |b| b.iter(|| correlogram(black_box(&s), black_box(&r), &grid).unwrap()));
    group.bench_function("parallel_4", |b| {
        b.iter(|| correlogram_par(black_box(&s), black_box(&r), &grid, 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmm_bench::synthetic;
use mmm_core::measures::{closeness, depth, utility, visibility, visibility_exact, IncidenceView, MeasureConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn measures(c: &mut Criterion) {
    let cfg = MeasureConfig::default();
    let mut group = c.benchmark_group("measures");
    for n in [50, 200, 800] {
        let (t, ids) = synthetic(n, 2, 1);
        let view = IncidenceView::from_territory(&t);
        let probe = ids[ids.len() / 2];
        let far = ids[0];
        group.bench_with_input(BenchmarkId::new("view", n), &t, |b, t| {
            b.iter(|| IncidenceView::from_territory(black_box(t)))
        });
        group.bench_with_input(BenchmarkId::new("depth", n), &probe, |b, &id| {
            b.iter(|| depth(&view, black_box(id), &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("utility", n), &probe, |b, &id| {
            b.iter(|| utility(&view, black_box(id), &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("closeness", n), &probe, |b, &id| {
            b.iter(|| closeness(&view, black_box(id), far).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("visibility_exact", n), &probe, |b, &id| {
            b.iter(|| visibility_exact(&view, black_box(id), &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("visibility_sampled", n), &probe, |b, &id| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            b.iter(|| visibility(&view, black_box(id), &cfg, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, measures);
criterion_main!(benches);

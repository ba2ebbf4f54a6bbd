use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wnb_bench::{fixture, spec};
use wnb_core::optim::{self, Method, OptimizerConfig};
use wnb_core::search::{self, SearchConfig};
use wnb_core::Variant;

fn searches(c: &mut Criterion) {
    let data = fixture(2000, 30);
    let boolean = spec(&data, Variant::Boolean);
    let fractional = spec(&data, Variant::Fractional);
    let continuous = spec(&data, Variant::Continuous);
    let cfg = SearchConfig::default();
    let mut group = c.benchmark_group("search_n2000_k30");
    group.sample_size(10);
    group.bench_function("snb", |b| {
        b.iter(|| search::snb_train(&data, &boolean, black_box(&cfg)).unwrap())
    });
    group.bench_function("fnb", |b| {
        b.iter(|| search::fnb_train(&data, &fractional, black_box(&cfg)).unwrap())
    });
    let start = search::uniform_init(30);
    for method in [Method::Sg, Method::SgCf, Method::CgUe] {
        let opt = OptimizerConfig::with_method(method);
        group.bench_function(method.to_string(), |b| {
            b.iter(|| optim::solve(&data, &continuous, &opt, black_box(&start)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, searches);
criterion_main!(benches);

use std::hint::black_box;

use bgp_bench::standard_fixtures;
use bgp_core::{execute_query, EngineConfig, Strategy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn strategies(c: &mut Criterion) {
    let config = EngineConfig::default();
    for fixture in standard_fixtures(8).expect("fixtures generate") {
        let mut group = c.benchmark_group(&fixture.name);
        group.throughput(Throughput::Elements(fixture.triples()));
        for strategy in Strategy::ALL {
            group.bench_with_input(BenchmarkId::from_parameter(strategy), &strategy, |b, &s| {
                b.iter(|| {
                    let ex = execute_query(&fixture.cluster, &fixture.dataset, &fixture.query, s, &config)
                        .expect("fixture query runs");
                    black_box(ex.result.len())
                })
            });
        }
        group.finish();
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = strategies
}
criterion_main!(benches);

//! Sequential against rayon execution of the same sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unidb::harness::{run_experiment, ExperimentSpec};
use unidb::parallel::Execution;

fn spec(dim: usize) -> ExperimentSpec {
    ExperimentSpec {
        samplers: [
            "euler-sde-data-o1",
            "unidbpp-sde-data-o1",
            "unidbpp-sde-data-o2s",
            "unidbpp-sde-data-o1-corr",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect(),
        nfe: vec![5, 10, 20, 50],
        seeds: 32,
        dim,
        ..ExperimentSpec::default()
    }
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for dim in [1, 256] {
        let spec = spec(dim);
        for (label, exec) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(label, dim), &spec, |b, spec| {
                b.iter(|| run_experiment(spec, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);

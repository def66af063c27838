use std::hint::black_box;

use bids_core::exec::Execution;
use bids_core::harness::{run_experiment, ExperimentConfig, Mode};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

// Setting 1, d = 5
fn config(replicates: usize) -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Pilot { theta: 0.2 },
        horizon: 20_000,
        c_b: 30.0,
        replicates,
        ..ExperimentConfig::default()
    }
}

fn replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicates");
    group.sample_size(10);
    for n in [4, 16] {
        let cfg = config(n);
        for (name, mode) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| {
                b.iter(|| black_box(run_experiment(cfg, mode).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);

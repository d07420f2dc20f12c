//! Same small rate sweep under both execution modes. Without the `parallel`
//! feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use otl_core::synthetic::GaussianTaskSpec;
use otl_core::{run_rate_experiment, Execution, RateConfig, Seed};

fn sweep(execution: Execution) -> RateConfig {
    let mut c = RateConfig::new(GaussianTaskSpec::kinked(3, 0.1), vec![50, 100, 200], Seed(1));
    c.trials = 4;
    c.m_source = 1000;
    c.n_eval = 1000;
    c.solver.tol = 1e-4;
    c.solver.max_iter = 100_000;
    c.execution = execution;
    c
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("rate_sweep");
    group.sample_size(10);
    for (name, mode) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        let config = sweep(mode);
        group.bench_with_input(BenchmarkId::from_parameter(name), &config, |b, cfg| {
            b.iter(|| run_rate_experiment(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

use std::sync::Arc;

use almult_core::catalog;
use almult_core::certificates::{default_perturbation_grid, sample_value_function, CertConfig};
use almult_core::search::global_min;
use almult_core::{Execution, LagrangianEvaluator, MultiplierVector, SearchConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn lagrangian_minimization(c: &mut Criterion) {
    let entry = catalog::get("SYN-CIRCLE").unwrap();
    let ev = LagrangianEvaluator::new(Arc::new(entry.spec), entry.default_sigma);
    let lam = MultiplierVector::nlp(vec![0.5], vec![0.0]);
    let mut group = c.benchmark_group("global_min");
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = SearchConfig {
            starts: 64,
            execution: exec,
            ..SearchConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| {
                global_min(
                    |x| ev.eval_lagrangian(x, &lam, 2.0).expect("dimensions match"),
                    2,
                    &ev.spec().region,
                    cfg,
                )
            })
        });
    }
    group.finish();
}

fn value_function_sampling(c: &mut Criterion) {
    let entry = catalog::get("P11").unwrap();
    let ev = LagrangianEvaluator::new(Arc::new(entry.spec), entry.default_sigma);
    let grid = default_perturbation_grid(ev.spec());
    let mut group = c.benchmark_group("value_function");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = CertConfig::default();
        cfg.search.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| sample_value_function(&ev, &grid, cfg).expect("samples"))
        });
    }
    group.finish();
}

criterion_group!(benches, lagrangian_minimization, value_function_sampling);
criterion_main!(benches);

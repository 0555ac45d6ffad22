use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drlq_cli::commands::{controller_policy, evaluate, run_trial, Controller};
use drlq_cli::quadrotor_preset;

fn trials(c: &mut Criterion) {
    let mut cfg = quadrotor_preset();
    let policy = controller_policy(&cfg, Controller::Wdr).unwrap();
    c.bench_function("run_trial/horizon_200", |b| {
        b.iter(|| run_trial(&cfg, &policy, 0))
    });

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);
    for n in [100, 500] {
        cfg.eval.trials = n;
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| evaluate(cfg, &policy, "wdr"))
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);

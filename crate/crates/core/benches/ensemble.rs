use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use incomedyn::*;

fn ensembles(c: &mut Criterion) {
    let model = Model::new(IncomeLadder::new(10, 10.0, 1.0).unwrap()).unwrap();
    let x0 = model.equilibrium_for_income(27.0).unwrap();
    let cfg = SimulationConfig {
        steps: 1000,
        mode: ConservationMode::Population,
        ..Default::default()
    };
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for realizations in [8, 32] {
        for (label, execution) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Parallel),
        ] {
            let opts = EnsembleOptions {
                realizations,
                execution,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(label, realizations), &opts, |b, opts| {
                b.iter(|| run_ensemble(&model, &x0, &cfg, opts).unwrap())
            });
        }
    }
    group.finish();
}

fn single_step(c: &mut Criterion) {
    let model = Model::new(IncomeLadder::new(10, 10.0, 1.0).unwrap()).unwrap();
    let x0 = model.equilibrium_for_income(27.0).unwrap();
    for mode in [
        ConservationMode::Population,
        ConservationMode::PopulationAndIncome,
    ] {
        let cfg = SimulationConfig {
            steps: 1000,
            mode,
            ..Default::default()
        };
        c.bench_function(&format!("trajectory_1000/{mode:?}"), |b| {
            b.iter(|| run_trajectory(&x0, &model, &cfg, 0).unwrap())
        });
    }
}

criterion_group!(benches, ensembles, single_step);
criterion_main!(benches);

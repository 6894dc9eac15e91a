use std::hint::black_box;

use antgrid_core::analysis::run_solo;
use antgrid_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn single_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    for program in AntProgramId::ALL {
        for d in [10u64, 40] {
            let cfg = RunConfig::new(program, 4, treasure_for(d, 2));
            let steps = run(cfg.clone()).unwrap().metrics.steps_per_ant.iter().sum::<u64>();
            group.throughput(Throughput::Elements(steps));
            group.bench_with_input(BenchmarkId::new(program.name(), d), &cfg, |b, cfg| {
                b.iter(|| run(black_box(cfg.clone())).unwrap())
            });
        }
    }
    group.finish();
}

fn faulty_runs(c: &mut Criterion) {
    let mut cfg = RunConfig::new(AntProgramId::AsyncFtFsm, 8, treasure_for(30, 5));
    cfg.faults = FaultPlan::random(4, 17);
    cfg.strategy = ScheduleStrategy::SeededRandom { seed: 17 };
    c.bench_function("run/async-ft-fsm-random-faults/30", |b| b.iter(|| run(black_box(cfg.clone())).unwrap()));
}

fn traced_run(c: &mut Criterion) {
    let mut cfg = RunConfig::new(AntProgramId::SyncFsm, 4, treasure_for(20, 1));
    cfg.record_trace = true;
    c.bench_function("run/sync-fsm-traced/20", |b| b.iter(|| run(black_box(cfg.clone())).unwrap()));
}

fn sweep(c: &mut Criterion) {
    let mut spec = ExperimentSpec::new(AntProgramId::ALL.to_vec(), vec![1, 2, 4], vec![5, 10, 15]);
    spec.seeds = (0..4).collect();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("five-programs-180-cells", |b| b.iter(|| run_experiment(black_box(&spec), None).unwrap()));
    group.finish();
}

fn cycle_detection(c: &mut Criterion) {
    let t = Position::new(-40, 40);
    c.bench_function("detect-cycle/budget-8", |b| {
        b.iter(|| {
            let trace = run_solo(AntProgramId::AsyncFsm, t, Some(8), 20_000).unwrap();
            detect_cycle(&trace, AntProgramId::AsyncFsm).unwrap()
        })
    });
}

fn fitting(c: &mut Criterion) {
    let samples: Vec<Sample> = [10u64, 20, 30, 40, 50, 60]
        .into_iter()
        .flat_map(|d| [1u32, 2, 4, 8].map(move |k| Sample { distance: d, k, f: 0, rounds: 2 * d + d * d / k as u64 }))
        .collect();
    c.bench_function("fit/search-24", |b| b.iter(|| fit_complexity(black_box(&samples), BoundModel::Search).unwrap()));
}

criterion_group!(runs, single_runs, faulty_runs, traced_run);
criterion_group!(experiments, sweep, cycle_detection, fitting);
criterion_main!(runs, experiments);

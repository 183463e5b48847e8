use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use risrelay_bench::{channel, maxcut};
use risrelay_core::aodriver::alternating_optimization;
use risrelay_core::conic::{solve, SolveOptions};
use risrelay_core::phaseopt::{optimize_phases, PhaseTask};
use risrelay_core::powerfeas::grid_search;
use risrelay_core::scenario::trial_rng;
use risrelay_core::{Criterion as Objective, PhaseConfig, PowerSplit, Protocol};

fn conic_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("ipm_maxcut");
    for n in [8, 16, 32] {
        let (spec, start) = maxcut(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve(black_box(&spec), &start, &SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn phase_subproblem(c: &mut Criterion) {
    let mut group = c.benchmark_group("phase_penalty_loop");
    group.sample_size(10);
    for m in [4, 8, 16] {
        let (cfg, ch) = channel(m, 0);
        let task = PhaseTask::new(&ch, &cfg, Protocol::Full, Objective::SumRate);
        let split = PowerSplit::new(0.2, 0.3).unwrap();
        let init = PhaseConfig::random(&mut trial_rng(1, 0), m);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| optimize_phases(&task, &split, black_box(&init)))
        });
    }
    group.finish();
}

fn power_grid(c: &mut Criterion) {
    let (cfg, ch) = channel(30, 0);
    let phases = PhaseConfig::zeros(30);
    for (name, protocol, criterion) in [
        ("grid_full_sum", Protocol::Full, Objective::SumRate),
        ("grid_hybrid_min", Protocol::Hybrid, Objective::MinRate),
    ] {
        c.bench_function(name, |b| {
            b.iter(|| grid_search(&ch, black_box(&phases), &cfg, protocol, criterion))
        });
    }
}

fn alternating(c: &mut Criterion) {
    let mut group = c.benchmark_group("alternating_optimization");
    group.sample_size(10);
    for m in [4, 8] {
        let (cfg, ch) = channel(m, 0);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                let mut rng = trial_rng(cfg.rng_seed, 0);
                alternating_optimization(&ch, &cfg, Protocol::Full, Objective::SumRate, &mut rng)
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    conic_solve,
    phase_subproblem,
    power_grid,
    alternating
);
criterion_main!(benches);

use criterion::{ criterion_group, criterion_main, BenchmarkId, Criterion, Throughput };
use std::hint::black_box;

use biphoton::calib;
use biphoton::sim::{ run_conditional_experiment, run_klyshko_experiment, simulate, tac_coincidences };
use biphoton::uncertainty::{ budget_conditional, monte_carlo_uncertainty, EstimatorId, UncertainInput };
use biphoton::{ BenchConfig, Experiment };

fn engine(c: &mut Criterion) {
    let mut group = c.benchmark_group("engine");
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 1e4;
    for duration in [1.0, 10.0] {
        group.throughput(Throughput::Elements((cfg.pair_rate_hz * duration) as u64));
        group.bench_with_input(BenchmarkId::new("conditional", duration), &duration, |b, &d| {
            b.iter(|| run_conditional_experiment(black_box(&cfg), d, 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("klyshko", duration), &duration, |b, &d| {
            b.iter(|| run_klyshko_experiment(black_box(&cfg), d, 1).unwrap())
        });
    }
    group.finish();
}

fn coincidence_counting(c: &mut Criterion) {
    let mut cfg = BenchConfig::default();
    cfg.pair_rate_hz = 1e5;
    let run = simulate(Experiment::Klyshko, &cfg, 1.0, 3).unwrap();
    let mut group = c.benchmark_group("tac");
    group.throughput(Throughput::Elements((run.trigger.len() + run.analyzer.len()) as u64));
    group.bench_function("klyshko_1s", |b| {
        b.iter(|| tac_coincidences(black_box(&run.trigger), black_box(&run.analyzer), 4.0, 9.3).unwrap())
    });
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let pts: Vec<(f64, f64)> = (0..19)
        .map(|i| {
            let th = 10.0 * i as f64;
            (th, 300.0 * (1.0 - 0.4 * (2.0 * th).to_radians().cos()))
        })
        .collect();
    c.bench_function("fit_theta_curve_19", |b| b.iter(|| calib::fit_theta_curve(black_box(&pts)).unwrap()));

    let inputs = [
        UncertainInput::gaussian("N_H", 76.6, 4.2),
        UncertainInput::gaussian("N_V", 165.9, 5.7),
        UncertainInput::gaussian("Nc_H", 4.4, 1.6),
        UncertainInput::gaussian("Nc_V", 48.7, 2.6),
    ];
    c.bench_function("budget_conditional", |b| b.iter(|| budget_conditional(black_box(&inputs)).unwrap()));
    c.bench_function("monte_carlo_1e5", |b| {
        b.iter(|| monte_carlo_uncertainty(EstimatorId::Conditional, &inputs, 100_000, 5).unwrap())
    });
}

criterion_group!(benches, engine, coincidence_counting, analysis);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use enscal::bma::{fit_bma_normal_em, BiasCorrection, EmOptions};
use enscal::dist::{crps_normal, crps_of, crps_truncnormal, Normal, TruncNormal};
use enscal::emos::{fit_emos, EmosFamily};
use enscal::optimize::Options;
use enscal::synth::Scenario;
use enscal::verification::crps_ensemble;
use enscal_bench::training_set;

fn crps(c: &mut Criterion) {
    let mut g = c.benchmark_group("crps");
    g.bench_function("normal_closed", |b| {
        b.iter(|| crps_normal(black_box(1.0), 2.0, 0.3))
    });
    g.bench_function("truncnormal_closed", |b| {
        b.iter(|| crps_truncnormal(black_box(1.0), 2.0, 0.3))
    });
    let n = Normal::new(1.0, 2.0).unwrap();
    g.bench_function("normal_quadrature", |b| {
        b.iter(|| crps_of(&n, black_box(0.3)).unwrap())
    });
    let t = TruncNormal::new(1.0, 2.0).unwrap();
    g.bench_function("truncnormal_quadrature", |b| {
        b.iter(|| crps_of(&t, black_box(0.3)).unwrap())
    });
    for m in [11usize, 51] {
        let members: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        g.bench_with_input(BenchmarkId::new("ensemble", m), &members, |b, ms| {
            b.iter(|| crps_ensemble(ms, black_box(0.1)))
        });
    }
    g.finish();
}

fn fits(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    for n_dates in [30usize, 60] {
        let set = training_set(Scenario::EmosNormal, 1, n_dates);
        g.bench_with_input(BenchmarkId::new("emos_normal", set.len()), &set, |b, s| {
            b.iter(|| fit_emos(s, EmosFamily::Normal, &Options::default()).unwrap())
        });
        let set = training_set(Scenario::BmaNormal, 1, n_dates);
        let bias = BiasCorrection::identity(2);
        g.bench_with_input(
            BenchmarkId::new("bma_normal_em", set.len()),
            &set,
            |b, s| b.iter(|| fit_bma_normal_em(s, &bias, None, &EmOptions::default()).unwrap()),
        );
    }
    g.finish();
}

criterion_group!(benches, crps, fits);
criterion_main!(benches);

//! Benchmarks for the four pipeline stages on coupon-collector chains:
//! schedule refinement, exact fixpoint, hitting profiles, aggregation,
//! and the certified distance.

use criterion::{criterion_group, criterion_main, Criterion};

use tlump::{
    aggregate, distance_d, exact_fixpoint, hitting_profile, run_target_algorithm, uniform_measure,
};
use tlump_bench::uniform_coupon;

fn bench_refine(c: &mut Criterion) {
    let mut group = c.benchmark_group("refine");
    for n in [10usize, 12] {
        let problem = uniform_coupon(n);
        group.bench_function(format!("coupon_{n}_schedule"), |b| {
            b.iter(|| run_target_algorithm(&problem, &[0.5, 0.1, 0.05], 0.0).unwrap());
        });
    }
    let problem = uniform_coupon(10);
    group.bench_function("coupon_10_exact_fixpoint", |b| {
        b.iter(|| exact_fixpoint(&problem, 0.0).unwrap());
    });
    group.finish();
}

fn bench_hitting_profile(c: &mut Criterion) {
    let problem = uniform_coupon(10);
    c.bench_function("hitting_profile/coupon_10_horizon_22", |b| {
        b.iter(|| hitting_profile(&problem, 22).unwrap());
    });
}

fn bench_aggregate(c: &mut Criterion) {
    let problem = uniform_coupon(12);
    let partition = exact_fixpoint(&problem, 0.0).unwrap();
    let measure = uniform_measure(&problem);
    c.bench_function("aggregate/coupon_12_fixpoint", |b| {
        b.iter(|| aggregate(&problem, &partition, &measure).unwrap());
    });
}

fn bench_distance(c: &mut Criterion) {
    let problem = uniform_coupon(10);
    let partition = exact_fixpoint(&problem, 0.0).unwrap();
    let aggregated = aggregate(&problem, &partition, &uniform_measure(&problem)).unwrap();
    c.bench_function("distance/coupon_10_vs_fixpoint", |b| {
        b.iter(|| distance_d(&problem, &aggregated, &partition, 1e-6).unwrap());
    });
}

criterion_group!(
    benches,
    bench_refine,
    bench_hitting_profile,
    bench_aggregate,
    bench_distance
);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sgfv_bench::pn_problem;
use sgfv_core::transport::Stepper;

fn one_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("pn_step");
    group.sample_size(20);
    for n in [16, 32, 64] {
        let problem = pn_problem(n);
        let mut stepper = Stepper::new(&problem.mesh, &problem.physics).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{n}")), &n, |b, _| {
            b.iter(|| stepper.step(black_box(&problem.initial), &problem.step).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, one_step);
criterion_main!(benches);

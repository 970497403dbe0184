use criterion::{black_box, criterion_group, criterion_main, Criterion};
use spikelab::model::{DomainMode, FieldTriple, ModelParams};
use spikelab::nlep::LineOperator;
use spikelab::outer::chi_of;
use spikelab::sim::{auto_grid, blended_spike, SpikeLevel, Stepper};
use spikelab::Complex64;

fn nucleating() -> ModelParams {
    ModelParams::builder()
        .a(0.5)
        .b(1.0)
        .c(1.0)
        .l(4.0)
        .delta1(1e-4)
        .build()
        .expect("valid parameters")
}

fn resolvent(c: &mut Criterion) {
    let op = LineOperator::default();
    c.bench_function("f_lambda complex", |b| {
        b.iter(|| op.f_lambda(black_box(Complex64::new(0.3, 0.8))))
    });
}

fn outer_quadrature(c: &mut Criterion) {
    let p = nucleating();
    c.bench_function("chi(mu)", |b| {
        b.iter(|| chi_of(black_box(0.9), black_box(0.51), &p))
    });
}

fn pde_step(c: &mut Criterion) {
    let p = nucleating();
    let grid = auto_grid(&p, DomainMode::Half, 1001).expect("grid");
    let init = blended_spike(&grid, &p, 0.0, SpikeLevel::Upper).expect("spike");
    let mut stepper = Stepper::new(p, &grid);
    let mut group = c.benchmark_group("imex step");
    group.bench_function(format!("n={}", grid.n()), |b| {
        b.iter(|| -> FieldTriple { stepper.step(black_box(&init), 1e-2, 1.0).expect("step") })
    });
    group.finish();
}

criterion_group!(benches, resolvent, outer_quadrature, pde_step);
criterion_main!(benches);

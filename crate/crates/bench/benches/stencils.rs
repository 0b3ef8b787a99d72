use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use kecone_core::abelian::reference_period_data;
use kecone_core::ball::{chart_point, heisenberg_forward, point_at_level, quotient_field};
use kecone_core::calabi::{ode_solve, OdeProblem};
use kecone_core::quasi::normalize_point;
use kecone_core::wirtinger::{einstein_residual, metric_from_potential};
use kecone_core::{Complex64, FiberChart, StencilConfig, UpstairsPoint};

fn stencils(c: &mut Criterion) {
    let refs = reference_period_data();
    let mut group = c.benchmark_group("stencil");
    group.sample_size(10);
    for pd in [&refs[0], &refs[3]] {
        let n = pd.n();
        let z = vec![Complex64::new(0.2, -0.1); n];
        let b = point_at_level(pd, &z, -5.0, 0.4);
        let p = chart_point(&b, FiberChart::Log).unwrap();
        let field = quotient_field(pd, FiberChart::Log);
        let (plain, nested) = (StencilConfig::default(), StencilConfig::nested());
        group.bench_with_input(BenchmarkId::new("metric", n), &p, |bch, p| {
            bch.iter(|| metric_from_potential(&field, black_box(p), &plain).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("einstein", n), &p, |bch, p| {
            bch.iter(|| einstein_residual(&field, black_box(p), -1.0, &nested).unwrap())
        });
    }
    group.finish();
}

fn maps(c: &mut Criterion) {
    let pd = &reference_period_data()[3];
    let x = UpstairsPoint::new(
        Complex64::new(0.3, 1.2),
        vec![Complex64::new(0.1, 0.4), Complex64::new(-0.7, 0.2)],
    );
    c.bench_function("heisenberg_forward n=2", |b| {
        b.iter(|| heisenberg_forward(pd, black_box(&x)))
    });
    let q = point_at_level(pd, &[Complex64::new(3.1, -2.0), Complex64::new(-1.4, 0.6)], -1e5, 1.1);
    c.bench_function("normalize_point n=2", |b| {
        b.iter(|| normalize_point(pd, black_box(&q)).unwrap())
    });
}

fn ode(c: &mut Criterion) {
    let pb = OdeProblem::from_closed(2, -10.0, -100.0, 1e-12).unwrap();
    c.bench_function("ode_solve n=2", |b| b.iter(|| ode_solve(black_box(&pb)).unwrap()));
}

criterion_group!(benches, stencils, maps, ode);
criterion_main!(benches);

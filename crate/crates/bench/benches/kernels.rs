use cayley_core::bvp::{assemble_bvp, kernel_dim, BCSpec, FlatCayleyDomain, ModeField, AnalyticField};
use cayley_core::nonlinear::{cayley_residual, newton_solve, GraphField, NewtonOptions, ScaffoldTranslation};
use cayley_core::sampling::{cell_rng, gaussian_vec8};
use cayley_core::spin7::{cross2, cross3, tau4};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn algebra(c: &mut Criterion) {
    let mut rng = cell_rng(1, 0);
    let [a, b, x, d] = [(); 4].map(|_| gaussian_vec8(&mut rng));
    c.bench_function("cross2", |bch| bch.iter(|| cross2(black_box(&a), black_box(&b))));
    c.bench_function("cross3", |bch| bch.iter(|| cross3(black_box(&a), black_box(&b), black_box(&x))));
    c.bench_function("tau4", |bch| bch.iter(|| tau4(black_box(&a), black_box(&b), black_box(&x), black_box(&d))));
}

fn boundary_problem(c: &mut Criterion) {
    let mut g = c.benchmark_group("bvp");
    g.sample_size(10);
    for n in [4, 6, 8] {
        let dom = FlatCayleyDomain::cube(n).unwrap();
        let bc = BCSpec::new(2).unwrap();
        g.bench_with_input(BenchmarkId::new("assemble", n), &n, |b, _| b.iter(|| assemble_bvp(&dom, &bc).unwrap()));
        let sys = assemble_bvp(&dom, &bc).unwrap();
        g.bench_with_input(BenchmarkId::new("kernel_dim", n), &n, |b, _| b.iter(|| kernel_dim(&sys, 1e6).unwrap()));
    }
    g.finish();
}

fn nonlinear(c: &mut Criterion) {
    let mut g = c.benchmark_group("nonlinear");
    g.sample_size(10);
    let dom = FlatCayleyDomain::cube(8).unwrap();
    let s = ModeField::new(&dom, [0.02, -0.01, 0.03, 0.01], [1, 0, 1], 0.3, 2.0, 0.1).sample(&dom);
    let graph = GraphField::new(&dom, s).unwrap();
    g.bench_function("cayley_residual_n8", |b| b.iter(|| cayley_residual(black_box(&graph))));
    let small = FlatCayleyDomain::cube(5).unwrap();
    let shift = ScaffoldTranslation::uniform([1e-2, 0.0, 0.0, 0.0]);
    g.bench_function("newton_k0_n5", |b| {
        b.iter(|| newton_solve(&small, &BCSpec::new(0).unwrap(), &shift, None, &NewtonOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, algebra, boundary_problem, nonlinear);
criterion_main!(benches);

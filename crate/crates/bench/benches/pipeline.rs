use std::hint::black_box;
use std::sync::Arc;

use afem_bench::corner_mesh;
use afem_core::oracles::manufactured_sin2;
use afem_core::{
    assemble, build_space, estimate_all, run, solve, uniform_partition, AfemConfig, FormParams, Mode, Problem,
    SolveOptions, SplineFunction,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn stages(c: &mut Criterion) {
    let m = manufactured_sin2();
    let mesh = corner_mesh(6);
    c.bench_function("refine corner x6", |b| b.iter(|| corner_mesh(black_box(6))));
    c.bench_function("build THB space r=3", |b| b.iter(|| build_space(black_box(&mesh), 3, true).unwrap()));

    let space = Arc::new(build_space(&uniform_partition(5), 3, true).unwrap());
    for mode in [Mode::Conforming, Mode::Nitsche] {
        let params = FormParams::defaults(mode, 3);
        c.bench_function(&format!("assemble {mode:?} r=3 level 5"), |b| {
            b.iter(|| assemble(&space, m.f.as_ref(), &params).unwrap())
        });
    }
    let params = FormParams::defaults(Mode::Nitsche, 3);
    let sys = assemble(&space, m.f.as_ref(), &params).unwrap();
    c.bench_function("direct solve Nitsche r=3 level 5", |b| {
        b.iter(|| solve(&sys.matrix, &sys.load, &SolveOptions::default()).unwrap())
    });
    let x = solve(&sys.matrix, &sys.load, &SolveOptions::default()).unwrap().x;
    let u = SplineFunction::new(space.clone(), sys.dofs.expand(&x)).unwrap();
    c.bench_function("estimate r=3 level 5", |b| b.iter(|| estimate_all(&u, m.f.as_ref(), 5)));
}

fn adaptive(c: &mut Criterion) {
    let cfg = AfemConfig {
        max_dofs: 3000,
        ..AfemConfig::new(Mode::Conforming, 2)
    };
    let prob = Problem::sin2();
    let mut g = c.benchmark_group("adaptive");
    g.sample_size(10);
    g.bench_function("sin2 r=2 to 3000 dofs", |b| b.iter(|| run(&cfg, &prob).unwrap()));
    g.finish();
}

criterion_group!(benches, stages, adaptive);
criterion_main!(benches);

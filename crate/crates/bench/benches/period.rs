use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vbob_core::fixtures::synthetic;
use vbob_core::{holonomy_curvature_residual, leaf_symplectic_area, load_model, period, pullback_sphere, transport, Bundle, Mat};

fn periods(c: &mut Criterion) {
    let m = load_model("sphere-trivial").unwrap();
    let v = m.split("V").unwrap().vba.clone();
    let p = pullback_sphere(&m.sphere("gen").unwrap().sphere, v).unwrap();
    let mut g = c.benchmark_group("period");
    g.sample_size(10);
    for n in [51, 101, 201] {
        g.bench_with_input(BenchmarkId::new("sphere-trivial", n), &n, |b, &n| b.iter(|| period(&p, n).unwrap()));
    }
    let fam = synthetic();
    g.bench_function("synthetic/101", |b| b.iter(|| period(&fam, 101).unwrap()));
    g.finish();
}

fn holonomy(c: &mut Criterion) {
    let fam = synthetic();
    let mut g = c.benchmark_group("holonomy");
    g.sample_size(10);
    g.bench_function("curvature-residual/100", |b| b.iter(|| holonomy_curvature_residual(&fam, Bundle::E, 100).unwrap()));
    let th = Mat::from_rows(vec![vec![0.3, 0.5, -0.1], vec![-0.4, 0.2, 0.7], vec![0.6, -0.3, -0.5]]);
    g.bench_function("transport/400", |b| b.iter(|| transport(|_| th.clone(), 0.0, 0.0, black_box(1.0), 400).unwrap()));
    g.finish();
}

fn leaf_area(c: &mut Criterion) {
    let m = load_model("su2-star").unwrap();
    let p = m.poisson("piE").unwrap();
    let s = p.leaf_sphere(1.0, 0.5).unwrap();
    let mut g = c.benchmark_group("leaf-area");
    g.sample_size(10);
    g.bench_function("su2-star/101", |b| b.iter(|| leaf_symplectic_area(&p.bivector, &s, 101).unwrap()));
    g.finish();
}

criterion_group!(benches, periods, holonomy, leaf_area);
criterion_main!(benches);

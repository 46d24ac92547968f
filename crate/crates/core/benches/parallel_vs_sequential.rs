use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fbsde_core::coeff::TimeGrid;
use fbsde_core::density::{kde, Bandwidth};
use fbsde_core::fbm::{sample_paths, Integrand};
use fbsde_core::generator::{Composite, Generator};
use fbsde_core::heat::TerminalMap;
use fbsde_core::par;
use fbsde_core::transfer::{representation_check, solve_transferred, GaussianDriverSpec, TransferGrid};
use std::hint::black_box;

fn paths(c: &mut Criterion) {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let mut g = c.benchmark_group("fbm_sample_paths_20k");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", par::current_threads()), |b| {
        b.iter(|| sample_paths(0.75, &grid, Integrand::Unit, black_box(20_000), 1).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| sample_paths(0.75, &grid, Integrand::Unit, black_box(20_000), 1).unwrap()))
    });
    g.finish();
}

fn density(c: &mut Criterion) {
    let s = fbsde_core::rng::normals(2, 100_000);
    let mut g = c.benchmark_group("kde_100k");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| kde(black_box(&s), Bandwidth::Silverman).unwrap()));
    g.bench_function("sequential", |b| b.iter(|| par::sequential(|| kde(black_box(&s), Bandwidth::Silverman).unwrap())));
    g.finish();
}

fn pushforward(c: &mut Criterion) {
    let d = GaussianDriverSpec::fbm(0.75, 1.0);
    let h = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
    let sol = solve_transferred(&d, &Generator::Zero, &h, TransferGrid { nx: 400, nt: 200, k: 8.0 }).unwrap();
    let z = fbsde_core::rng::normals(3, 100_000);
    let mut g = c.benchmark_group("transfer_pushforward_100k");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| sol.pushforward(0.5, black_box(&z)).unwrap()));
    g.bench_function("sequential", |b| b.iter(|| par::sequential(|| sol.pushforward(0.5, black_box(&z)).unwrap())));
    g.finish();
}

fn eps_sweep(c: &mut Criterion) {
    let d = GaussianDriverSpec::brownian(1.0);
    let f = Generator::Composite(Composite { y_sin: 0.5, z_lin: 0.3, ..Default::default() });
    let eps = [0.2, 0.1, 0.05, 0.025];
    let grid = TransferGrid { nx: 100, nt: 100, k: 8.0 };
    let mut g = c.benchmark_group("representation_sweep");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| representation_check(&d, &f, 0.0, 1.0, 0.5, black_box(&eps), grid).unwrap()));
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| representation_check(&d, &f, 0.0, 1.0, 0.5, black_box(&eps), grid).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, paths, density, pushforward, eps_sweep);
criterion_main!(benches);

//! Rayon vs sequential comparison for the data-parallel inner loops:
//! operator application and full V-cycles on a gyroid elasticity problem.
//!
//! Run with `cargo bench -p latmg`. The sequential numbers use the same
//! binary with the runtime parallel switch off, so both paths share every
//! other optimization; without the `parallel` feature the crate always
//! runs the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use latmg::cycles::{CycleConfig, MgSolver};
use latmg::fem::{element_kernel, Physics};
use latmg::hierarchy::build_hierarchy;
use latmg::homog::build_loads;
use latmg::parallel::set_parallel_enabled;
use latmg::voxgeom::{generate_tpms_with_volume_fraction, MaterialModel, TpmsKind};

fn setup(n: usize, levels: usize) -> (MgSolver, latmg::Field) {
    let grid = generate_tpms_with_volume_fraction(TpmsKind::Gyroid, n, 0.3).unwrap();
    let hierarchy = build_hierarchy(&grid, levels).unwrap();
    let kernel =
        element_kernel(Physics::Elasticity, &MaterialModel::default(), grid.element_size()).unwrap();
    let scales: Vec<f64> =
        hierarchy.level(1).elements.iter().map(|&e| grid.values()[e as usize]).collect();
    let solver = MgSolver::new(hierarchy, kernel, scales).unwrap();
    let loads = build_loads(solver.finest_op()).unwrap();
    (solver, loads)
}

fn bench_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("ebe_apply");
    for n in [16usize, 32] {
        let (solver, f) = setup(n, 2);
        let u = f.clone();
        for (label, parallel) in [("rayon", true), ("sequential", false)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                set_parallel_enabled(parallel);
                let mut out = solver.finest_op().zeros_like(u.modes);
                b.iter(|| solver.finest_op().apply_into(&u, &mut out).unwrap());
            });
        }
    }
    set_parallel_enabled(true);
    group.finish();
}

fn bench_v_cycle(c: &mut Criterion) {
    let mut group = c.benchmark_group("v_cycle");
    group.sample_size(20);
    for n in [16usize, 32] {
        let levels = if n == 16 { 3 } else { 4 };
        let (solver, f) = setup(n, levels);
        let cfg = CycleConfig::default();
        for (label, parallel) in [("rayon", true), ("sequential", false)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                set_parallel_enabled(parallel);
                b.iter(|| {
                    let mut u = solver.finest_op().zeros_like(f.modes);
                    solver.v_cycle(&mut u, &f, None, &cfg).unwrap();
                    u
                });
            });
        }
    }
    set_parallel_enabled(true);
    group.finish();
}

criterion_group!(benches, bench_apply, bench_v_cycle);
criterion_main!(benches);

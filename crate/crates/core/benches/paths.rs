use std::hint::black_box;

use criterion::{Criterion, criterion_group, criterion_main};
use fsdde_core::delayed_ml::{DelayPair, MatrixTriple};
use fsdde_core::detsolve::{CoefficientFn, Grid, HistoryFn, SystemSpec};
use fsdde_core::stochastic::{NoiseFn, PathConfig, PathSimulator};
use nalgebra::DMatrix;

fn simulator() -> PathSimulator {
    let triple = MatrixTriple::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.0, -2.0]),
    )
    .unwrap();
    let delays = DelayPair::new(1.0, 0.5).unwrap();
    let sys = SystemSpec::new(triple, delays, 0.51, 2.0).unwrap();
    let f = CoefficientFn::new(1.0, 1.0, |_, _, y1, _, out: &mut [f64]| {
        for (o, y) in out.iter_mut().zip(y1) {
            *o = y.cos();
        }
    });
    let g = NoiseFn::new(2, 1.0, 1.0, |_, _, _, y2, out: &mut [f64]| {
        out.fill(0.0);
        out[0] = y2[0].sin();
        out[3] = y2[1].sin();
    });
    let grid = Grid::new(0.01, 2.0, delays).unwrap();
    PathSimulator::new(&sys, &HistoryFn::zero(1.0, 2), &f, &g, PathConfig::new(256, 1, grid)).unwrap()
}

fn bench_paths(c: &mut Criterion) {
    let sim = simulator();
    let mut group = c.benchmark_group("example1_256_paths");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| black_box(sim.run_sequential().unwrap())));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| b.iter(|| black_box(sim.run_parallel().unwrap())));
    group.finish();
}

criterion_group!(benches, bench_paths);
criterion_main!(benches);

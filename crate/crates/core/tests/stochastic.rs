mod common;

use common::{example_delays, example_triple};
use fsdde_core::delayed_ml::{DelayPair, MatrixTriple};
use fsdde_core::detsolve::{CoefficientFn, Grid, HistoryFn, PicardOptions, SystemSpec, picard_solve};
use fsdde_core::specfun::gamma_fn;
use fsdde_core::stochastic::{MomentEstimate, NoiseFn, PathConfig, PathSimulator, simulate_paths};
use nalgebra::{DMatrix, DVector};

fn zero_system(lambda: f64) -> SystemSpec {
    SystemSpec::new(MatrixTriple::zeros(1), DelayPair::new(0.5, 0.5).unwrap(), lambda, 1.0).unwrap()
}

#[test]
fn ito_isometry_for_constant_noise() {
    for lambda in [0.6, 0.75, 0.9] {
        let sys = zero_system(lambda);
        let grid = Grid::new(0.01, 1.0, sys.delays).unwrap();
        let g = NoiseFn::constant(DMatrix::from_element(1, 1, 1.0));
        let phi = HistoryFn::zero(0.5, 1);
        let sim = simulate_paths(&sys, &phi, &CoefficientFn::zero(), &g, PathConfig::new(10_000, 2024, grid)).unwrap();
        let est = &sim.moments;
        let denom = (2.0 * lambda - 1.0) * gamma_fn(lambda).unwrap().powi(2);
        for i in [25usize, 50, 100] {
            let t = grid.time(i as isize);
            let want = t.powf(2.0 * lambda - 1.0) / denom;
            let got = est.mean[est.origin + i];
            assert!((got - want).abs() <= 0.05 * want, "λ={lambda} t={t}: {got} vs {want}");
        }
    }
}

fn example_setup() -> (SystemSpec, HistoryFn, CoefficientFn, NoiseFn, Grid) {
    let sys = SystemSpec::new(example_triple(), example_delays(), 0.7, 1.0).unwrap();
    let phi = HistoryFn::from_fn(1.0, 50, |t| DVector::from_vec(vec![0.1 * t.exp(), 0.0])).unwrap();
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
    let grid = Grid::new(0.02, 1.0, sys.delays).unwrap();
    (sys, phi, f, g, grid)
}

#[test]
fn shuffled_path_order_is_bit_identical() {
    let (sys, phi, f, g, grid) = example_setup();
    let mut cfg = PathConfig::new(64, 99, grid);
    cfg.keep_paths = true;
    let simr = PathSimulator::new(&sys, &phi, &f, &g, cfg).unwrap();
    let sim = simr.run().unwrap();
    let mut order: Vec<u64> = (0..64).collect();
    order.reverse();
    order.swap(3, 40);
    order.swap(10, 17);
    let shuffled: Vec<_> = order.iter().map(|&id| simr.path(id).unwrap()).collect();
    for sp in &shuffled {
        let a = sim.paths.iter().find(|p| p.path_id == sp.path_id).unwrap();
        assert_eq!(a.values.as_slice(), sp.values.as_slice());
    }
    let est = MomentEstimate::from_paths(&shuffled, cfg.p).unwrap();
    assert_eq!(est.mean, sim.moments.mean);
    assert_eq!(est.stderr, sim.moments.stderr);
}

#[test]
fn zero_noise_paths_track_the_deterministic_solution() {
    let (sys, phi, f, _, _) = example_setup();
    let grid = Grid::new(0.005, 1.0, sys.delays).unwrap();
    let mut cfg = PathConfig::new(3, 5, grid);
    cfg.keep_paths = true;
    let sim = simulate_paths(&sys, &phi, &f, &NoiseFn::zero(2), cfg).unwrap();
    let det = picard_solve(&sys, &phi, &f, &grid, PicardOptions::default()).unwrap().trajectory;
    for sp in &sim.paths {
        assert_eq!(sp.values.as_slice(), sim.paths[0].values.as_slice());
    }
    let scale = det.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(sim.paths[0].values.max_diff(&det) <= 0.02 * scale);

    let free = simulate_paths(&sys, &phi, &CoefficientFn::zero(), &NoiseFn::zero(2), cfg).unwrap();
    let det_free =
        picard_solve(&sys, &phi, &CoefficientFn::zero(), &grid, PicardOptions::default()).unwrap().trajectory;
    assert!(free.paths[0].values.max_diff(&det_free) <= 1e-12 * scale);
}

#[test]
fn doubling_noise_quadruples_second_moment() {
    let sys = SystemSpec::new(example_triple(), example_delays(), 0.7, 1.0).unwrap();
    let grid = Grid::new(0.02, 1.0, sys.delays).unwrap();
    let phi = HistoryFn::zero(1.0, 2);
    let s = DMatrix::from_row_slice(2, 1, &[0.3, -0.2]);
    let cfg = PathConfig::new(200, 8, grid);
    let one = simulate_paths(&sys, &phi, &CoefficientFn::zero(), &NoiseFn::constant(s.clone()), cfg).unwrap();
    let two = simulate_paths(&sys, &phi, &CoefficientFn::zero(), &NoiseFn::constant(s * 2.0), cfg).unwrap();
    for (a, b) in one.moments.mean.iter().zip(&two.moments.mean) {
        assert!((b - 4.0 * a).abs() <= 1e-10 * b.abs().max(1e-300));
    }
}

#[test]
fn zero_history_rows_stay_zero() {
    let (sys, _, f, g, grid) = example_setup();
    let phi = HistoryFn::zero(1.0, 2);
    let sim = simulate_paths(&sys, &phi, &f, &g, PathConfig::new(16, 1, grid)).unwrap();
    let est = &sim.moments;
    assert!(est.mean[..est.origin].iter().all(|&m| m == 0.0));
    assert!(est.mean.iter().all(|m| m.is_finite()));
}

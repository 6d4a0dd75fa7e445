mod common;

use common::{Uniform, example_delays, example_triple};
use fsdde_core::delayed_ml::{DelayPair, DelayedMl, MatrixTriple, NormKind, QBoundary, operator_norm};
use fsdde_core::specfun::{MlParams, TruncationPolicy, ml_eval};
use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;

fn dml(triple: MatrixTriple, delays: DelayPair, lambda: f64, horizon: f64, boundary: QBoundary) -> DelayedMl {
    DelayedMl::new(triple, delays, lambda, horizon, boundary, TruncationPolicy::default()).unwrap()
}

#[test]
fn origin_and_negative_times() {
    for boundary in [QBoundary::Printed, QBoundary::Neutral] {
        let e = dml(example_triple(), example_delays(), 0.5, 2.0, boundary);
        for nu in [1.0, 0.5, 0.0] {
            assert_eq!(e.eval(nu, 0.0).unwrap().value, DMatrix::identity(2, 2));
            assert_eq!(e.eval(nu, -0.3).unwrap().value, DMatrix::zeros(2, 2));
        }
    }
}

/// Before the first delay only m = (0, 0) contributes, so the function is
/// Σ A0^k t^{kλ+ν-1}/Γ(kλ+ν). A0 = [[-1, 2], [0, 1]] has eigenvalues -1 and 1,
/// which gives an independent route through scalar Mittag-Leffler values.
#[test]
fn collapses_to_power_series_before_first_delay() {
    let v = Matrix2::new(1.0, 1.0, 0.0, 1.0);
    let vinv = v.try_inverse().unwrap();
    let a0 = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, 1.0]);
    let check = |triple: MatrixTriple| {
        for lambda in [0.5f64, 0.7, 0.95] {
            let e = dml(triple.clone(), example_delays(), lambda, 2.0, QBoundary::Neutral);
            for nu in [1.0, lambda, 0.6] {
                for t in [0.01f64, 0.1, 0.25, 0.4, 0.49] {
                    let tl = t.powf(lambda);
                    let scale = t.powf(nu - 1.0);
                    let pol = TruncationPolicy::default();
                    let d = [
                        scale * ml_eval(MlParams::new(lambda, nu), -tl, pol).unwrap(),
                        scale * ml_eval(MlParams::new(lambda, nu), tl, pol).unwrap(),
                    ];
                    let want: Matrix2<f64> = v * Matrix2::new(d[0], 0.0, 0.0, d[1]) * vinv;
                    let got = e.eval(nu, t).unwrap().value;
                    for r in 0..2 {
                        for c in 0..2 {
                            let tol = 1e-8 * want[(r, c)].abs().max(1.0);
                            assert!(
                                (got[(r, c)] - want[(r, c)]).abs() < tol,
                                "λ={lambda} ν={nu} t={t}: {got} vs {want}"
                            );
                        }
                    }
                }
            }
        }
    };
    assert_eq!(v * Matrix2::new(-1.0, 0.0, 0.0, 1.0) * vinv, Matrix2::new(-1.0, 2.0, 0.0, 1.0));
    check(MatrixTriple::new(a0.clone(), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)).unwrap());
    check(example_triple());
}

#[test]
fn norm_domination_at_sampled_points() {
    let mut u = Uniform::new(11);
    for boundary in [QBoundary::Printed, QBoundary::Neutral] {
        let e = dml(example_triple(), example_delays(), 0.5, 2.0, boundary);
        for _ in 0..200 {
            let t = u.range(1e-3, 2.0);
            for nu in [1.0, 0.5] {
                let m = e.eval(nu, t).unwrap().value;
                let bound = e.majorant(nu, t).unwrap();
                assert!(operator_norm(&m) <= bound * (1.0 + 1e-10), "t={t} ν={nu}");
            }
        }
    }
}

#[test]
fn majorant_matches_frobenius_variant_ordering() {
    let e = DelayedMl::with_norm(
        example_triple(),
        example_delays(),
        0.6,
        2.0,
        QBoundary::Neutral,
        NormKind::Frobenius,
        TruncationPolicy::default(),
    )
    .unwrap();
    let o = dml(example_triple(), example_delays(), 0.6, 2.0, QBoundary::Neutral);
    for t in [0.3, 0.9, 1.7] {
        assert!(e.majorant(1.0, t).unwrap() >= o.majorant(1.0, t).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn majorant_dominates_random_systems(
        entries in proptest::collection::vec(-2.0f64..2.0, 12),
        lambda in 0.55f64..0.95,
        t in 0.05f64..1.5,
        neutral in any::<bool>(),
    ) {
        let m = |k: usize| DMatrix::from_row_slice(2, 2, &entries[4 * k..4 * k + 4]);
        let triple = MatrixTriple::new(m(0), m(1), m(2)).unwrap();
        let boundary = if neutral { QBoundary::Neutral } else { QBoundary::Printed };
        let e = dml(triple, DelayPair::new(0.7, 0.4).unwrap(), lambda, 1.5, boundary);
        let v = e.eval(1.0, t).unwrap().value;
        prop_assert!(operator_norm(&v) <= e.majorant(1.0, t).unwrap() * (1.0 + 1e-10));
    }

    #[test]
    fn scalar_zero_delay_terms_reduce_to_mittag_leffler(a in -2.0f64..1.0, lambda in 0.4f64..0.99, t in 0.0f64..2.0) {
        let triple = MatrixTriple::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        ).unwrap();
        let e = dml(triple, DelayPair::new(0.5, 0.5).unwrap(), lambda, 2.0, QBoundary::Neutral);
        let got = e.eval(1.0, t).unwrap().value[(0, 0)];
        let pol = TruncationPolicy { rel_tol: 1e-9, ..TruncationPolicy::default() };
        let want = ml_eval(MlParams::one(lambda), a * t.powf(lambda), pol).unwrap();
        prop_assert!((got - want).abs() < 1e-8 * want.abs().max(1.0));
    }
}

//! Frozen reference values (50-digit mpmath, see `oracles/freeze.py`).

use approx::assert_relative_eq;
use fsdde_core::specfun::{MlParams, TruncationPolicy, gamma_fn, ml_eval, recip_gamma};

const GAMMA: &[(f64, f64)] = &[
    (0.1, 9.5135076986687313),
    (0.5, 1.772453850905516),
    (1.3, 0.89747069630627718),
    (2.5, 1.329340388179137),
    (7.7, 2769.8303623273146),
    (33.3, 7.4875775965226323e+35),
    (100.5, 9.3209631040827166e+156),
    (170.5, 5.5620924145599996e+305),
    (-0.5, -3.5449077018110321),
    (-2.5, -0.94530872048294188),
    (-7.3, 0.00041838787301354802),
];

const ML: &[(f64, f64, f64, f64)] = &[
    (0.5, 1.0, 2.0, 108.94090438997797),
    (0.75, 0.75, 1.5, 8.5323043856361521),
    (0.6, 1.0, -1.0, 0.4133273409431063),
    (0.9, 1.2, 10.0, 270809.65549841028),
    (0.5, 0.5, 3.0, 48618.530751582308),
    (0.2, 1.0, 0.5, 2.0897724527766632),
    (1.5, 2.0, 4.0, 3.1532193219630854),
    (0.8, 1.8, -2.0, 0.40510165381814718),
];

#[test]
fn gamma_matches_reference() {
    for &(x, want) in GAMMA {
        assert_relative_eq!(gamma_fn(x).unwrap(), want, max_relative = 1e-12);
        assert_relative_eq!(recip_gamma(x) * want, 1.0, max_relative = 1e-12);
    }
}

#[test]
fn mittag_leffler_matches_reference() {
    let pol = TruncationPolicy::default();
    for &(a, b, z, want) in ML {
        let got = ml_eval(MlParams::new(a, b), z, pol).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-11);
    }
}

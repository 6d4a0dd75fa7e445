//! Builtin drift, noise and history functions.
//!
//! Declared Lipschitz constants follow ‖f(u) - f(v)‖ ≤ L (Σ_j ‖u_j - v_j‖^p)^{1/p}
//! over the three arguments y(t), y(t-h1), y(t-h2). A tag reading one argument
//! has L = |scale|; the sum tags read two, so L = |scale| 2^{(p-1)/p}.

use fsdde_core::detsolve::{CoefficientFn, Grid, HistoryFn};
use fsdde_core::stochastic::NoiseFn;
use nalgebra::DVector;

use crate::config::{CoefficientTag, HistoryTag};

/// Componentwise value of a tag at (t, y, y(t-h1), y(t-h2)).
fn component(tag: CoefficientTag, t: f64, y: f64, y1: f64, y2: f64) -> f64 {
    match tag {
        CoefficientTag::Zero => 0.0,
        CoefficientTag::CosDelay1 => y1.cos(),
        CoefficientTag::SinDelay2 => y2.sin(),
        CoefficientTag::SinSum => (t + y2 + y1).sin(),
        CoefficientTag::CosSum => (t + y2 + y1).cos(),
        CoefficientTag::Linear => y,
    }
}

/// (Lipschitz constant, growth constant) for a scaled tag in dimension n.
pub fn constants(tag: CoefficientTag, scale: f64, n: usize, p: f64) -> (f64, f64) {
    let s = scale.abs();
    let bound = s * (n as f64).sqrt();
    match tag {
        CoefficientTag::Zero => (0.0, 0.0),
        CoefficientTag::CosDelay1 | CoefficientTag::SinDelay2 => (s, bound),
        CoefficientTag::SinSum | CoefficientTag::CosSum => (s * 2f64.powf((p - 1.0) / p), bound),
        CoefficientTag::Linear => (s, s),
    }
}

pub fn drift(tag: CoefficientTag, scale: f64, n: usize, p: f64) -> CoefficientFn {
    if tag == CoefficientTag::Zero {
        return CoefficientFn::zero();
    }
    let (l, g) = constants(tag, scale, n, p);
    CoefficientFn::new(l, g, move |t, y, y1, y2, out: &mut [f64]| {
        for i in 0..out.len() {
            out[i] = scale * component(tag, t, y[i], y1[i], y2[i]);
        }
    })
}

/// Diagonal n×n noise (q = n) built from a tag.
pub fn noise(tag: CoefficientTag, scale: f64, n: usize, q: usize, p: f64) -> NoiseFn {
    if tag == CoefficientTag::Zero {
        return NoiseFn::zero(q);
    }
    let (l, g) = constants(tag, scale, n, p);
    NoiseFn::new(q, l, g, move |t, y, y1, y2, out: &mut [f64]| {
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = scale * component(tag, t, y[i], y1[i], y2[i]);
        }
    })
}

/// History on [-h, 0] tabulated at the grid's history nodes.
pub fn history(tag: HistoryTag, value: &[f64], grid: &Grid) -> HistoryFn {
    let n = value.len();
    let hs = grid.history_steps();
    let h = hs as f64 * grid.step();
    match tag {
        HistoryTag::Zero => HistoryFn::zero(h, n),
        HistoryTag::Constant => HistoryFn::constant(h, DVector::from_column_slice(value)),
        HistoryTag::Exp => {
            let v = DVector::from_column_slice(value);
            HistoryFn::from_fn(h, hs, move |t| &v * t.exp()).expect("history grid is valid")
        }
    }
}

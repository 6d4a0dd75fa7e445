//! Deterministic solution of the neutral fractional delay equation through its
//! delayed Mittag-Leffler representation.
//!
//! All convolutions use product trapezoidal quadrature: the smooth factor is
//! interpolated linearly on each panel and the kernel is integrated exactly
//! through its series antiderivatives. On a delay-commensurate grid every
//! lattice displacement is an integer number of steps, so the kernel tables
//! are indexed by lag alone.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::delayed_ml::{DelayPair, DelayedMl, MatrixTriple, QBoundary};
use crate::error::{FsddeError, Result};
use crate::specfun::{MlParams, TruncationPolicy, gamma_fn, ml_ln};

/// The full problem instance apart from the coefficient functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub triple: MatrixTriple,
    pub delays: DelayPair,
    pub lambda: f64,
    pub horizon: f64,
}

impl SystemSpec {
    pub fn new(triple: MatrixTriple, delays: DelayPair, lambda: f64, horizon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(FsddeError::Domain(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(FsddeError::Domain(format!("horizon T = {horizon} must be positive")));
        }
        Ok(Self { triple, delays, lambda, horizon })
    }

    pub fn dim(&self) -> usize {
        self.triple.dim()
    }

    /// Evaluator for this system under the given Q boundary convention.
    pub fn delayed_ml(&self, boundary: QBoundary, pol: TruncationPolicy) -> Result<DelayedMl> {
        DelayedMl::new(self.triple.clone(), self.delays, self.lambda, self.horizon, boundary, pol)
    }
}

/// Initial history φ on [-h, 0], tabulated on a uniform grid and linearly
/// interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFn {
    h: f64,
    step: f64,
    values: Vec<DVector<f64>>,
}

impl HistoryFn {
    /// Tabulated values at -h, -h + step, ..., 0.
    pub fn tabulated(h: f64, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() < 2 || !(h > 0.0) {
            return Err(FsddeError::Domain("history needs h > 0 and at least two nodes".into()));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n || v.iter().any(|x| !x.is_finite())) {
            return Err(FsddeError::Domain("history values must be finite vectors of equal length".into()));
        }
        let step = h / (values.len() - 1) as f64;
        Ok(Self { h, step, values })
    }

    /// Samples `f` at `intervals + 1` equally spaced nodes on [-h, 0].
    pub fn from_fn(h: f64, intervals: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let intervals = intervals.max(1);
        let values = (0..=intervals).map(|i| f(-h + h * i as f64 / intervals as f64)).collect();
        Self::tabulated(h, values)
    }

    pub fn zero(h: f64, n: usize) -> Self {
        Self { h, step: h, values: vec![DVector::zeros(n); 2] }
    }

    pub fn constant(h: f64, c: DVector<f64>) -> Self {
        Self { h, step: h, values: vec![c.clone(), c] }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// φ(t) for t in [-h, 0].
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let x = ((t + self.h) / self.step).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let w = x - i as f64;
        if w == 0.0 {
            return self.values[i].clone();
        }
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    /// Φ = max ‖φ(t)‖ over the nodes (exact for piecewise-linear φ).
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Multiplies every node by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { h: self.h, step: self.step, values: self.values.iter().map(|v| v * c).collect() }
    }
}

/// f(t, y, y(t-h1), y(t-h2)) written into the last argument.
pub type DriftEval = dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Nonlinear drift with its declared constants.
///
/// `lipschitz` is L with ‖f(t,y) - f(t,z)‖^p ≤ L^p Σ_j ‖y_j - z_j‖^p, the form in
/// which it enters the contraction constant.
#[derive(Clone)]
pub struct CoefficientFn {
    eval: Arc<DriftEval>,
    pub lipschitz: f64,
    pub growth: f64,
    is_zero: bool,
}

impl std::fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientFn")
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .field("is_zero", &self.is_zero)
            .finish()
    }
}

impl CoefficientFn {
    pub fn new(
        lipschitz: f64,
        growth: f64,
        eval: impl Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(eval), lipschitz, growth, is_zero: false }
    }

    pub fn zero() -> Self {
        Self { eval: Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0)), lipschitz: 0.0, growth: 0.0, is_zero: true }
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn eval_into(&self, t: f64, y: &[f64], y1: &[f64], y2: &[f64], out: &mut [f64]) {
        (self.eval)(t, y, y1, y2, out)
    }

    pub fn eval(&self, t: f64, y: &DVector<f64>, y1: &DVector<f64>, y2: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(y.len());
        self.eval_into(t, y.as_slice(), y1.as_slice(), y2.as_slice(), out.as_mut_slice());
        out
    }
}

/// Uniform grid t_i = i Δt on [-h, T] with both delays on grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    step: f64,
    n_steps: usize,
    h1_steps: usize,
    h2_steps: usize,
}

fn commensurate(x: f64, step: f64) -> Option<usize> {
    let k = (x / step).round();
    if k >= 1.0 && (k * step - x).abs() <= 1e-9 * x.max(1.0) { Some(k as usize) } else { None }
}

/// Largest step not exceeding `step` that divides every value in `xs`.
pub fn nearest_commensurate_step(step: f64, xs: &[f64]) -> f64 {
    const SCALE: f64 = 1e6;
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = xs.iter().map(|&x| (x * SCALE).round() as u64).filter(|&x| x > 0).fold(0, gcd);
    if g == 0 {
        return step;
    }
    let d = g as f64 / SCALE;
    d / (d / step).ceil()
}

impl Grid {
    pub fn new(step: f64, horizon: f64, delays: DelayPair) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(FsddeError::Domain(format!("grid step {step} must be positive")));
        }
        let fit = (commensurate(horizon, step), commensurate(delays.h1, step), commensurate(delays.h2, step));
        match fit {
            (Some(n_steps), Some(h1_steps), Some(h2_steps)) => Ok(Self { step, n_steps, h1_steps, h2_steps }),
            _ => Err(FsddeError::NonCommensurateGrid {
                step,
                suggested: nearest_commensurate_step(step, &[horizon, delays.h1, delays.h2]),
            }),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of steps N on [0, T].
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn h1_steps(&self) -> usize {
        self.h1_steps
    }

    pub fn h2_steps(&self) -> usize {
        self.h2_steps
    }

    /// Number of steps covering the history [-h, 0].
    pub fn history_steps(&self) -> usize {
        self.h1_steps.max(self.h2_steps)
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.step
    }

    /// t_i for i in -history_steps..=n_steps.
    pub fn time(&self, i: isize) -> f64 {
        i as f64 * self.step
    }

    /// All times from -h to T.
    pub fn times(&self) -> Vec<f64> {
        let hs = self.history_steps() as isize;
        (-hs..=self.n_steps as isize).map(|i| self.time(i)).collect()
    }
}

/// A solution on the full grid [-h, T], stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    n: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(grid: Grid, n: usize) -> Self {
        Self { grid, n, values: vec![0.0; (grid.history_steps() + grid.n_steps() + 1) * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// State at grid index i (negative indices are history).
    pub fn at(&self, i: isize) -> &[f64] {
        let r = (i + self.grid.history_steps() as isize) as usize;
        &self.values[r * self.n..(r + 1) * self.n]
    }

    pub fn at_mut(&mut self, i: isize) -> &mut [f64] {
        let r = (i + self.grid.history_steps() as isize) as usize;
        &mut self.values[r * self.n..(r + 1) * self.n]
    }

    pub fn vector(&self, i: isize) -> DVector<f64> {
        DVector::from_column_slice(self.at(i))
    }

    /// Row-major values over [-h, T].
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Fills the history rows from φ.
    pub fn set_history(&mut self, phi: &HistoryFn) {
        let hs = self.grid.history_steps() as isize;
        for i in -hs..=0 {
            let v = phi.eval(self.grid.time(i));
            self.at_mut(i).copy_from_slice(v.as_slice());
        }
    }

    /// max_i ‖y_i - z_i‖ over t ≥ 0.
    pub fn max_diff(&self, other: &Trajectory) -> f64 {
        (0..=self.grid.n_steps() as isize)
            .map(|i| self.at(i).iter().zip(other.at(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Lag-indexed kernel quadrature weights for one system on one grid.
///
/// Each matrix entry is stored column-major (n×n) per lag l:
/// - `e1[l]` = E^{λ,1}(lΔ), l = 0..=N
/// - `w0_lam[l]`, `w1_lam[l]`: panel weights of E^{λ,λ} over u in [lΔ, (l+1)Δ]
/// - `w0_zero[l]`, `w1_zero[l]`: the same for the absolutely continuous part of E^{λ,0}
///
/// A panel contributes (w0 - w1) g(right) + w1 g(left) for a function g that is
/// linear in s, where "right" is the end nearer the evaluation time.
#[derive(Debug, Clone)]
pub struct KernelTables {
    n: usize,
    steps: usize,
    dt: f64,
    pub(crate) e1: Vec<f64>,
    pub(crate) w0_lam: Vec<f64>,
    pub(crate) w1_lam: Vec<f64>,
    pub(crate) w0_zero: Vec<f64>,
    pub(crate) w1_zero: Vec<f64>,
    /// Point masses of E^{λ,0}: (lattice lag in steps, Q_1).
    pub(crate) atoms: Vec<(usize, DMatrix<f64>)>,
    /// Leading singular parts of E^{λ,λ}: (lattice lag, Q_1/Γ(λ)).
    pub(crate) singular: Vec<(usize, DMatrix<f64>)>,
    lambda: f64,
    error_bound: f64,
}

#[cfg(feature = "parallel")]
fn map_lags<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_lags<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).map(f).collect()
}

impl KernelTables {
    pub fn build(dml: &DelayedMl, grid: &Grid) -> Result<Self> {
        let n = dml.dim();
        let nn = n * n;
        let steps = grid.n_steps();
        let dt = grid.step();
        let lam = dml.lambda();
        let (h1s, h2s) = (grid.h1_steps() as i64, grid.h2_steps() as i64);
        // (E1, F1λ, F2λ, F1₀, F2₀) at u = lΔ.
        let rows = map_lags(steps + 2, |l| {
            let disp = move |m1: usize, m2: usize| (l as i64 - m1 as i64 * h1s - m2 as i64 * h2s) as f64 * dt;
            let mut row = vec![0.0; 5 * nn];
            let mut bound = 0.0;
            let specs = [(1.0, false), (lam + 1.0, false), (lam + 2.0, false), (1.0, true), (2.0, true)];
            for (slot, &(beta, skip)) in specs.iter().enumerate() {
                let out = &mut row[slot * nn..(slot + 1) * nn];
                let (b, _) = dml.accumulate_matrix(beta, skip, usize::MAX, usize::MAX, &disp, out)?;
                bound = f64::max(bound, b);
            }
            Ok((row, bound))
        })?;
        let get = |l: usize, slot: usize| &rows[l].0[slot * nn..(slot + 1) * nn];
        let mut e1 = Vec::with_capacity((steps + 1) * nn);
        for l in 0..=steps {
            e1.extend_from_slice(get(l, 0));
        }
        let mut w0_lam = Vec::with_capacity(steps * nn);
        let mut w1_lam = Vec::with_capacity(steps * nn);
        let mut w0_zero = Vec::with_capacity(steps * nn);
        let mut w1_zero = Vec::with_capacity(steps * nn);
        for l in 0..steps {
            for (w0, w1, s1, s2) in [(&mut w0_lam, &mut w1_lam, 1, 2), (&mut w0_zero, &mut w1_zero, 3, 4)] {
                let (f1a, f1b, f2a, f2b) = (get(l, s1), get(l + 1, s1), get(l, s2), get(l + 1, s2));
                for e in 0..nn {
                    w0.push(f1b[e] - f1a[e]);
                    w1.push(f1b[e] - (f2b[e] - f2a[e]) / dt);
                }
            }
        }
        let error_bound = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let rg = 1.0 / gamma_fn(lam)?;
        let mut atoms = Vec::new();
        let mut singular = Vec::new();
        for (m1, m2, q1) in dml.first_level() {
            let lag = m1 * grid.h1_steps() + m2 * grid.h2_steps();
            atoms.push((lag, q1.clone()));
            singular.push((lag, q1 * rg));
        }
        Ok(Self { n, steps, dt, e1, w0_lam, w1_lam, w0_zero, w1_zero, atoms, singular, lambda: lam, error_bound })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest truncation estimate over all tabulated lags.
    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    pub(crate) fn lag<'a>(&self, table: &'a [f64], l: usize) -> &'a [f64] {
        let nn = self.n * self.n;
        &table[l * nn..(l + 1) * nn]
    }

    /// E^{λ,1}(lΔ).
    pub fn e1(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, self.lag(&self.e1, l))
    }

    /// ∫ over the panel [lΔ, (l+1)Δ] of E^{λ,λ}(u) du.
    pub fn panel_integral(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, self.lag(&self.w0_lam, l))
    }
}

/// out += M x for a column-major n×n matrix slice.
#[inline]
pub(crate) fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = &m[j * n..(j + 1) * n];
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
}

/// out += (w0 - w1) a + w1 b.
#[inline]
pub(crate) fn panel_acc(w0: &[f64], w1: &[f64], right: &[f64], left: &[f64], out: &mut [f64]) {
    let n = right.len();
    for j in 0..n {
        let (r, l) = (right[j], left[j]);
        if r == 0.0 && l == 0.0 {
            continue;
        }
        for i in 0..n {
            let e = j * n + i;
            out[i] += (w0[e] - w1[e]) * r + w1[e] * l;
        }
    }
}

/// History part of the solution at every grid time t_0..t_N:
/// E^{λ,1}(t)(φ(0) - A2 φ(-h2)) plus the A1 and A2 history convolutions.
pub fn history_on_grid(
    sys: &SystemSpec,
    tables: &KernelTables,
    grid: &Grid,
    phi: &HistoryFn,
) -> Result<Vec<DVector<f64>>> {
    let n = sys.dim();
    if phi.dim() != n {
        return Err(FsddeError::DimensionMismatch(format!("history has dimension {}, system {n}", phi.dim())));
    }
    let h1s = grid.h1_steps();
    let h2s = grid.h2_steps();
    let ph = |i: isize| phi.eval(grid.time(i));
    let z0 = ph(0) - &sys.triple.a2 * ph(-(h2s as isize));
    // A1 φ(t_j - h1) for j = 0..=H1 and A2 φ(t_j - h2) for j = 0..=H2.
    let g1: Vec<DVector<f64>> = (0..=h1s).map(|j| &sys.triple.a1 * ph(j as isize - h1s as isize)).collect();
    let g2: Vec<DVector<f64>> = (0..=h2s).map(|j| &sys.triple.a2 * ph(j as isize - h2s as isize)).collect();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    for i in 0..=grid.n_steps() {
        let mut acc = vec![0.0; n];
        matvec_acc(tables.lag(&tables.e1, i), z0.as_slice(), &mut acc);
        for j in 0..h1s.min(i) {
            let l = i - j - 1;
            panel_acc(
                tables.lag(&tables.w0_lam, l),
                tables.lag(&tables.w1_lam, l),
                g1[j + 1].as_slice(),
                g1[j].as_slice(),
                &mut acc,
            );
        }
        for j in 0..h2s.min(i) {
            let l = i - j - 1;
            panel_acc(
                tables.lag(&tables.w0_zero, l),
                tables.lag(&tables.w1_zero, l),
                g2[j + 1].as_slice(),
                g2[j].as_slice(),
                &mut acc,
            );
        }
        // Point masses of E^{λ,0} at lattice lags c: Q_1 A2 φ(t - h2 - c) when
        // that argument lies in [-h2, 0).
        for (lag, q1) in &tables.atoms {
            let idx = i as isize - h2s as isize - *lag as isize;
            if idx >= -(h2s as isize) && idx < 0 {
                let v = q1 * &g2[(idx + h2s as isize) as usize];
                for (a, b) in acc.iter_mut().zip(v.iter()) {
                    *a += b;
                }
            }
        }
        out.push(DVector::from_vec(acc));
    }
    Ok(out)
}

/// History part of the solution at an arbitrary time t ∈ [0, T].
///
/// Uses the panels of φ's own tabulation and evaluates the kernel
/// antiderivatives pointwise, so it needs no grid; it serves as the reference
/// for the lag-table version.
pub fn history_integrals(dml: &DelayedMl, phi: &HistoryFn, t: f64) -> Result<DVector<f64>> {
    let n = dml.dim();
    if phi.dim() != n {
        return Err(FsddeError::DimensionMismatch(format!("history has dimension {}, system {n}", phi.dim())));
    }
    if t < 0.0 {
        return Err(FsddeError::Domain(format!("history integrals are defined for t >= 0, got {t}")));
    }
    let lam = dml.lambda();
    let tri = dml.triple();
    let DelayPair { h1, h2 } = dml.delays();
    let z0 = phi.eval(0.0) - &tri.a2 * phi.eval(-h2);
    let mut acc = dml.eval(1.0, t)?.value * z0;

    // F_r(u) = Σ Q g_{kλ+β+r}(u - c_m), the r-th antiderivative of the kernel.
    let anti = |beta: f64, skip: bool, u: f64| -> Result<DMatrix<f64>> {
        let mut out = vec![0.0; n * n];
        if u > 0.0 {
            dml.accumulate_matrix(
                beta,
                skip,
                usize::MAX,
                usize::MAX,
                &|m1, m2| u - m1 as f64 * h1 - m2 as f64 * h2,
                &mut out,
            )?;
        }
        Ok(DMatrix::from_column_slice(n, n, &out))
    };
    let step = phi.step();
    let mut conv = |a_mat: &DMatrix<f64>, hd: f64, beta: f64, skip: bool| -> Result<()> {
        // ∫_0^{min(hd,t)} K(t - τ) A φ(τ - hd) dτ over φ's panels.
        let panels = (hd / step).round() as usize;
        for j in 0..panels {
            let (ta, tb) = (j as f64 * step, (j + 1) as f64 * step);
            if ta >= t {
                break;
            }
            let ga = a_mat * phi.eval(ta - hd);
            let gb = a_mat * phi.eval(tb - hd);
            // u = t - τ; linear in u with g(u = t - tb) = gb, g(u = t - ta) = ga.
            let (ua, ub) = (t - tb, t - ta);
            let lo = ua.max(0.0);
            let (f1lo, f1hi) = (anti(beta + 1.0, skip, lo)?, anti(beta + 1.0, skip, ub)?);
            let (f2lo, f2hi) = (anti(beta + 2.0, skip, lo)?, anti(beta + 2.0, skip, ub)?);
            let i0 = &f1hi - &f1lo;
            let iu = (&f1hi * ub - &f2hi) - (&f1lo * lo - &f2lo);
            let slope = (&ga - &gb) / step;
            acc += &i0 * &gb + (iu - &i0 * ua) * slope;
        }
        Ok(())
    };
    conv(&tri.a1, h1, lam, false)?;
    conv(&tri.a2, h2, 0.0, true)?;
    for (m1, m2, q1) in dml.first_level() {
        let s = t - h2 - m1 as f64 * h1 - m2 as f64 * h2;
        if s >= -h2 && s < 0.0 {
            acc += q1 * (&tri.a2 * phi.eval(s));
        }
    }
    Ok(acc)
}

/// Controls for [`picard_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Moment order p of the weighted distance.
    pub p: f64,
    /// Rate γ of the weighted distance.
    pub gamma: f64,
    pub policy: TruncationPolicy,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200, p: 2.0, gamma: 1.0, policy: TruncationPolicy::default() }
    }
}

/// Converged trajectory with the contraction diagnostics.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// Weighted distances ‖y^{k+1} - y^k‖_γ^p between successive iterates.
    pub distances: Vec<f64>,
    /// Ratios of successive distances, kept while both are above rounding level.
    pub ratios: Vec<f64>,
}

/// ln E_{pλ-p+1}(γ t^{pλ-p+1}) at every grid time t_0..t_N.
pub fn weight_logs(grid: &Grid, lambda: f64, p: f64, gamma: f64) -> Result<Vec<f64>> {
    let a = p * lambda - p + 1.0;
    if !(a > 0.0) {
        return Err(FsddeError::Domain(format!(
            "weighted norm needs lambda > (p-1)/p; got lambda = {lambda}, p = {p}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(FsddeError::Domain(format!("weighted norm needs gamma > 0, got {gamma}")));
    }
    let pol = TruncationPolicy { rel_tol: 1e-14, abs_tol: 0.0, max_terms: 10_000_000 };
    (0..=grid.n_steps()).map(|i| ml_ln(MlParams::one(a), gamma * grid.time(i as isize).powf(a), pol)).collect()
}

/// Weighted distance max_i (max_{k≤i} ‖y_k - z_k‖)^p / E_{pλ-p+1}(γ t_i^{pλ-p+1}).
pub fn weighted_distance(y: &Trajectory, z: &Trajectory, p: f64, weight_logs: &[f64]) -> f64 {
    let mut run = 0.0f64;
    let mut best = 0.0f64;
    for (i, &lw) in weight_logs.iter().enumerate() {
        let d = y.at(i as isize).iter().zip(z.at(i as isize)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        run = run.max(d);
        if run > 0.0 {
            best = best.max((p * run.ln() - lw).exp());
        }
    }
    best
}

/// Applies the integral map once: base + ∫ E^{λ,λ}(t-s) f(s, y(s), ...) ds.
fn picard_map(
    traj: &Trajectory,
    base: &[DVector<f64>],
    tables: &KernelTables,
    f: &CoefficientFn,
    out: &mut Trajectory,
) {
    let grid = traj.grid;
    let n = traj.dim();
    let (h1s, h2s) = (grid.h1_steps() as isize, grid.h2_steps() as isize);
    let nsteps = grid.n_steps();
    let mut fv = vec![0.0; (nsteps + 1) * n];
    if !f.is_zero() {
        for j in 0..=nsteps {
            let ji = j as isize;
            f.eval_into(grid.time(ji), traj.at(ji), traj.at(ji - h1s), traj.at(ji - h2s), &mut fv[j * n..(j + 1) * n]);
        }
    }
    for i in 0..=nsteps {
        let row = out.at_mut(i as isize);
        row.copy_from_slice(base[i].as_slice());
        if f.is_zero() {
            continue;
        }
        for j in 0..i {
            let l = i - j - 1;
            panel_acc(
                tables.lag(&tables.w0_lam, l),
                tables.lag(&tables.w1_lam, l),
                &fv[(j + 1) * n..(j + 2) * n],
                &fv[j * n..(j + 1) * n],
                row,
            );
        }
    }
}

/// Fixed point of the mild-solution map by Picard iteration from y^0 ≡ φ(0).
///
/// Iteration stops once the sup-norm change is below `tol` relative to the
/// iterate. Contraction ratios are measured in the weighted distance.
pub fn picard_solve(
    sys: &SystemSpec,
    phi: &HistoryFn,
    f: &CoefficientFn,
    grid: &Grid,
    opts: PicardOptions,
) -> Result<PicardSolution> {
    let dml = sys.delayed_ml(QBoundary::Neutral, opts.policy)?;
    let tables = KernelTables::build(&dml, grid)?;
    picard_solve_with(sys, phi, f, grid, &tables, opts)
}

/// [`picard_solve`] with prebuilt kernel tables.
pub fn picard_solve_with(
    sys: &SystemSpec,
    phi: &HistoryFn,
    f: &CoefficientFn,
    grid: &Grid,
    tables: &KernelTables,
    opts: PicardOptions,
) -> Result<PicardSolution> {
    let n = sys.dim();
    let base = history_on_grid(sys, tables, grid, phi)?;
    let wl = weight_logs(grid, sys.lambda, opts.p, opts.gamma)?;
    let mut cur = Trajectory::zeros(*grid, n);
    cur.set_history(phi);
    let y0 = phi.eval(0.0);
    for i in 1..=grid.n_steps() as isize {
        cur.at_mut(i).copy_from_slice(y0.as_slice());
    }
    let mut next = cur.clone();
    let zero = Trajectory::zeros(*grid, n);
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    for it in 1..=opts.max_iter {
        picard_map(&cur, &base, tables, f, &mut next);
        if next.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(FsddeError::Overflow("Picard iterate is not finite".into()));
        }
        let d = weighted_distance(&next, &cur, opts.p, &wl);
        let floor = (1e3 * f64::EPSILON).powf(opts.p) * weighted_distance(&next, &zero, opts.p, &wl);
        if let Some(&prev) = distances.last()
            && prev > floor
            && d > floor
        {
            ratios.push(d / prev);
        }
        distances.push(d);
        let step = next.max_diff(&cur);
        let scale = next.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        std::mem::swap(&mut cur, &mut next);
        if step <= opts.tol * scale {
            return Ok(PicardSolution { trajectory: cur, iterations: it, distances, ratios });
        }
    }
    Err(FsddeError::NoConvergence { iterations: opts.max_iter, last_ratio: ratios.last().copied().unwrap_or(f64::NAN) })
}

/// Largest residual of the L1 Caputo discretization of
/// D^λ[y - A2 y(·-h2)] = A0 y + A1 y(·-h1) + f
/// over grid points with t_i ≥ `from_time` (and i ≥ 1).
///
/// The L1 scheme loses accuracy in the initial layer where the solution
/// behaves like t^λ, so callers measuring convergence start the window away
/// from t = 0.
pub fn caputo_residual(traj: &Trajectory, sys: &SystemSpec, f: &CoefficientFn, grid: &Grid, from_time: f64) -> f64 {
    let n = sys.dim();
    let lam = sys.lambda;
    let (h1s, h2s) = (grid.h1_steps() as isize, grid.h2_steps() as isize);
    let nsteps = grid.n_steps();
    let a2 = &sys.triple.a2;
    let z: Vec<DVector<f64>> = (0..=nsteps as isize).map(|i| traj.vector(i) - a2 * traj.vector(i - h2s)).collect();
    let b: Vec<f64> = (0..nsteps).map(|l| ((l + 1) as f64).powf(1.0 - lam) - (l as f64).powf(1.0 - lam)).collect();
    let c = grid.step().powf(-lam) / gamma_fn(2.0 - lam).unwrap_or(1.0);
    let mut worst = 0.0f64;
    let mut fv = DVector::zeros(n);
    for i in 1..=nsteps {
        if grid.time(i as isize) < from_time - 1e-12 {
            continue;
        }
        let mut d = DVector::zeros(n);
        for j in 0..i {
            d += (&z[j + 1] - &z[j]) * b[i - j - 1];
        }
        d *= c;
        let ii = i as isize;
        let y = traj.vector(ii);
        let y1 = traj.vector(ii - h1s);
        let y2 = traj.vector(ii - h2s);
        f.eval_into(grid.time(ii), y.as_slice(), y1.as_slice(), y2.as_slice(), fv.as_mut_slice());
        let rhs = &sys.triple.a0 * &y + &sys.triple.a1 * &y1 + &fv;
        worst = worst.max((d - rhs).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_noncommensurate_step() {
        let d = DelayPair::new(1.0, 0.5).unwrap();
        match Grid::new(0.3, 2.0, d) {
            Err(FsddeError::NonCommensurateGrid { suggested, .. }) => assert!((suggested - 0.25).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let g = Grid::new(0.01, 2.0, d).unwrap();
        assert_eq!((g.n_steps(), g.h1_steps(), g.h2_steps(), g.history_steps()), (200, 100, 50, 100));
    }

    #[test]
    fn history_interpolates_linearly() {
        let phi = HistoryFn::from_fn(1.0, 4, |t| DVector::from_vec(vec![t, 2.0 * t])).unwrap();
        let v = phi.eval(-0.6);
        assert!((v[0] + 0.6).abs() < 1e-15 && (v[1] + 1.2).abs() < 1e-15);
        assert_eq!(phi.sup_norm(), 5f64.sqrt());
    }

    #[test]
    fn zero_history_gives_zero_integrals() {
        let sys = SystemSpec::new(MatrixTriple::zeros(2), DelayPair::new(1.0, 0.5).unwrap(), 0.6, 1.0).unwrap();
        let dml = sys.delayed_ml(QBoundary::Neutral, TruncationPolicy::default()).unwrap();
        let v = history_integrals(&dml, &HistoryFn::zero(1.0, 2), 0.7).unwrap();
        assert_eq!(v, DVector::zeros(2));
    }
}

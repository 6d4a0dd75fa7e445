//! Two-delay perturbed Mittag-Leffler matrix function
//!
//! E^{λ,ν}(t) = Σ_k Σ_{m1,m2} Q_{k+1}(m1 h1, m2 h2) (t - m1 h1 - m2 h2)_+^{kλ+ν-1} / Γ(kλ+ν)
//!
//! with the Q-matrix recursion
//! Q_{k+1}(m1, m2) = A0 Q_k(m1, m2) + A1 Q_k(m1-1, m2) + A2 Q_{k+1}(m1, m2-1).

use nalgebra::DMatrix;

use crate::error::{FsddeError, Result};
use crate::specfun::{TruncationPolicy, ln_gamma};

/// The coefficient matrices A0, A1, A2.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTriple {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

impl MatrixTriple {
    pub fn new(a0: DMatrix<f64>, a1: DMatrix<f64>, a2: DMatrix<f64>) -> Result<Self> {
        let n = a0.nrows();
        for (name, m) in [("A0", &a0), ("A1", &a1), ("A2", &a2)] {
            if m.nrows() != n || m.ncols() != n || n == 0 {
                return Err(FsddeError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { a0, a1, a2 })
    }

    pub fn zeros(n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        Self { a0: z.clone(), a1: z.clone(), a2: z }
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// [‖A0‖, ‖A1‖, ‖A2‖] in the chosen norm.
    pub fn norms(&self, kind: NormKind) -> [f64; 3] {
        [kind.of(&self.a0), kind.of(&self.a1), kind.of(&self.a2)]
    }

    /// The 1x1 triple of norms used by the scalar majorant.
    pub fn norm_triple(&self, kind: NormKind) -> MatrixTriple {
        let [a, b, c] = self.norms(kind);
        MatrixTriple {
            a0: DMatrix::from_element(1, 1, a),
            a1: DMatrix::from_element(1, 1, b),
            a2: DMatrix::from_element(1, 1, c),
        }
    }
}

/// The delays h1, h2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPair {
    pub h1: f64,
    pub h2: f64,
}

impl DelayPair {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        if !(h1 > 0.0) || !(h2 > 0.0) || !h1.is_finite() || !h2.is_finite() {
            return Err(FsddeError::Domain(format!("delays must be positive, got h1 = {h1}, h2 = {h2}")));
        }
        Ok(Self { h1, h2 })
    }

    pub fn h(&self) -> f64 {
        self.h1.max(self.h2)
    }
}

/// Matrix norm used for the scalar majorant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormKind {
    #[default]
    Operator,
    Frobenius,
}

impl NormKind {
    pub fn of(self, m: &DMatrix<f64>) -> f64 {
        match self {
            NormKind::Operator => operator_norm(m),
            NormKind::Frobenius => m.norm(),
        }
    }
}

/// Spectral norm by power iteration on MᵀM (50 iterations, tolerance 1e-10).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let ata = m.transpose() * m;
    let n = ata.nrows();
    if n == 0 || ata.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // Uneven start so the iterate is not orthogonal to the top singular vector
    // for structured matrices.
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..50 {
        let w = &ata * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        let converged = (nw - est).abs() <= 1e-10 * nw;
        est = nw;
        if converged {
            break;
        }
    }
    est.sqrt()
}

/// Boundary convention for the first level of the Q recursion.
///
/// `Printed` keeps Q_1 nonzero only at the origin. `Neutral` runs the
/// recursion from Q_0 = 0, which gives Q_1(0, m2) = A2^{m2}; this is the
/// convention under which the series solves the neutral equation when A2 ≠ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QBoundary {
    #[default]
    Neutral,
    Printed,
}

/// Memoized Q_k(m1 h1, m2 h2) matrices, k = 0..=levels-1.
#[derive(Debug, Clone)]
pub struct QTable {
    n: usize,
    levels: usize,
    m1max: usize,
    m2max: usize,
    boundary: QBoundary,
    data: Vec<f64>,
}

impl QTable {
    fn offset(&self, k: usize, m1: usize, m2: usize) -> usize {
        ((k * (self.m1max + 1) + m1) * (self.m2max + 1) + m2) * self.n * self.n
    }

    /// Q_k(m1, m2) as a column-major slice; k is the level index (Q_1(0,0) = I).
    pub fn slice(&self, k: usize, m1: usize, m2: usize) -> &[f64] {
        let o = self.offset(k, m1, m2);
        &self.data[o..o + self.n * self.n]
    }

    pub fn get(&self, k: usize, m1: usize, m2: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, self.slice(k, m1, m2))
    }

    /// Highest level stored.
    pub fn kmax_level(&self) -> usize {
        self.levels - 1
    }

    pub fn m1max(&self) -> usize {
        self.m1max
    }

    pub fn m2max(&self) -> usize {
        self.m2max
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> QBoundary {
        self.boundary
    }
}

/// Q table with the boundary as printed (Q_1 = I at the origin only).
pub fn build_q_table(m: &MatrixTriple, kmax: usize, m1max: usize, m2max: usize) -> Result<QTable> {
    build_q_table_with(m, QBoundary::Printed, kmax, m1max, m2max)
}

/// Q table for levels 0..=kmax+1. Stops early if entries overflow.
pub fn build_q_table_with(
    m: &MatrixTriple,
    boundary: QBoundary,
    kmax: usize,
    m1max: usize,
    m2max: usize,
) -> Result<QTable> {
    MatrixTriple::new(m.a0.clone(), m.a1.clone(), m.a2.clone())?;
    if kmax < 1 {
        return Err(FsddeError::Domain("kmax must be at least 1".into()));
    }
    let n = m.dim();
    let nn = n * n;
    let per_level = (m1max + 1) * (m2max + 1) * nn;
    let mut t = QTable { n, levels: 1, m1max, m2max, boundary, data: vec![0.0; per_level] };
    let (a0, a1, a2) = (m.a0.as_slice(), m.a1.as_slice(), m.a2.as_slice());
    let mut cur = vec![0.0; per_level];
    for k in 0..=kmax {
        cur.iter_mut().for_each(|x| *x = 0.0);
        let prev_base = k * per_level;
        for m1 in 0..=m1max {
            for m2 in 0..=m2max {
                let o = (m1 * (m2max + 1) + m2) * nn;
                let (done, rest) = cur.split_at_mut(o);
                let out = &mut rest[..nn];
                if k == 0 && m1 == 0 && m2 == 0 {
                    for i in 0..n {
                        out[i * n + i] = 1.0;
                    }
                }
                let printed_first = k == 0 && boundary == QBoundary::Printed;
                if printed_first {
                    continue;
                }
                let qk = &t.data[prev_base + o..prev_base + o + nn];
                matmul_acc(a0, qk, out, n);
                if m1 > 0 {
                    let o1 = ((m1 - 1) * (m2max + 1) + m2) * nn;
                    let q = &t.data[prev_base + o1..prev_base + o1 + nn];
                    matmul_acc(a1, q, out, n);
                }
                if m2 > 0 {
                    let o2 = (m1 * (m2max + 1) + m2 - 1) * nn;
                    matmul_acc(a2, &done[o2..o2 + nn], out, n);
                }
            }
        }
        if cur.iter().any(|x| !x.is_finite()) {
            break;
        }
        t.data.extend_from_slice(&cur);
        t.levels += 1;
    }
    Ok(t)
}

/// out += a * b for column-major n×n slices.
fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for j in 0..n {
        for l in 0..n {
            let blj = b[j * n + l];
            if blj == 0.0 {
                continue;
            }
            for i in 0..n {
                out[j * n + i] += a[l * n + i] * blj;
            }
        }
    }
}

/// Result of a delayed Mittag-Leffler evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DmlValue {
    pub value: DMatrix<f64>,
    pub error_bound: f64,
    pub terms: usize,
}

/// Evaluator for one problem instance (matrices, delays, λ) up to a horizon.
///
/// Holds the matrix Q table and the scalar table built from the norms, which
/// doubles as the truncation majorant.
#[derive(Debug, Clone)]
pub struct DelayedMl {
    triple: MatrixTriple,
    delays: DelayPair,
    lambda: f64,
    horizon: f64,
    norm: NormKind,
    q: QTable,
    qbar: QTable,
    pol: TruncationPolicy,
}

/// Lattice offsets fall on grid points up to rounding; this absorbs it.
const LATTICE_EPS: f64 = 1e-9;

impl DelayedMl {
    pub fn new(
        triple: MatrixTriple,
        delays: DelayPair,
        lambda: f64,
        horizon: f64,
        boundary: QBoundary,
        pol: TruncationPolicy,
    ) -> Result<Self> {
        Self::with_norm(triple, delays, lambda, horizon, boundary, NormKind::Operator, pol)
    }

    pub fn with_norm(
        triple: MatrixTriple,
        delays: DelayPair,
        lambda: f64,
        horizon: f64,
        boundary: QBoundary,
        norm: NormKind,
        pol: TruncationPolicy,
    ) -> Result<Self> {
        pol.validate()?;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(FsddeError::Domain(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(FsddeError::Domain(format!("horizon = {horizon} must be finite and nonnegative")));
        }
        let m1max = (horizon / delays.h1 + LATTICE_EPS).floor() as usize;
        let m2max = (horizon / delays.h2 + LATTICE_EPS).floor() as usize;
        let kmax = pol.max_terms.max(1);
        let q = build_q_table_with(&triple, boundary, kmax, m1max, m2max)?;
        let qbar = build_q_table_with(&triple.norm_triple(norm), boundary, kmax, m1max, m2max)?;
        Ok(Self { triple, delays, lambda, horizon, norm, q, qbar, pol })
    }

    pub fn triple(&self) -> &MatrixTriple {
        &self.triple
    }

    pub fn delays(&self) -> DelayPair {
        self.delays
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn boundary(&self) -> QBoundary {
        self.q.boundary
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.pol
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.triple.dim()
    }

    /// Nonzero Q_1 entries: (m1, m2, Q_1). These carry the k = 0 terms.
    pub fn first_level(&self) -> Vec<(usize, usize, DMatrix<f64>)> {
        let mut out = Vec::new();
        for m1 in 0..=self.q.m1max {
            for m2 in 0..=self.q.m2max {
                let s = self.q.slice(1, m1, m2);
                if s.iter().any(|&x| x != 0.0) {
                    out.push((m1, m2, self.q.get(1, m1, m2)));
                }
            }
        }
        out
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t > self.horizon * (1.0 + 1e-12) + LATTICE_EPS {
            return Err(FsddeError::Domain(format!(
                "t = {t} exceeds the horizon {} the Q table was built for",
                self.horizon
            )));
        }
        Ok(())
    }

    /// E^{λ,ν}(t) as an n×n matrix.
    pub fn eval(&self, nu: f64, t: f64) -> Result<DmlValue> {
        let n = self.dim();
        if t < 0.0 {
            return Ok(DmlValue { value: DMatrix::zeros(n, n), error_bound: 0.0, terms: 0 });
        }
        if t == 0.0 {
            return Ok(DmlValue { value: DMatrix::identity(n, n), error_bound: 0.0, terms: 0 });
        }
        self.check_t(t)?;
        let mut out = vec![0.0; n * n];
        let (h1, h2) = (self.delays.h1, self.delays.h2);
        let info = self.accumulate(
            &self.q,
            nu,
            false,
            usize::MAX,
            usize::MAX,
            &|m1, m2| t - m1 as f64 * h1 - m2 as f64 * h2,
            &mut out,
        )?;
        Ok(DmlValue { value: DMatrix::from_column_slice(n, n, &out), error_bound: info.0, terms: info.1 })
    }

    /// Scalar majorant E^{λ,ν}(‖A0‖, ‖A1‖, ‖A2‖; t).
    pub fn majorant(&self, nu: f64, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(FsddeError::Domain("majorant is defined for t >= 0".into()));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        self.check_t(t)?;
        let mut out = [0.0];
        let (h1, h2) = (self.delays.h1, self.delays.h2);
        self.accumulate(
            &self.qbar,
            nu,
            false,
            usize::MAX,
            usize::MAX,
            &|m1, m2| t - m1 as f64 * h1 - m2 as f64 * h2,
            &mut out,
        )?;
        Ok(out[0])
    }

    /// Σ Q_{k+1}(m) g_{kλ+β}(u_m) accumulated into `out` for the matrix table
    /// (`use_scalar = false`) or the scalar majorant table.
    ///
    /// `disp(m1, m2)` gives the displacement u_m; nonpositive-index lattice
    /// points with u_m < 0 contribute nothing. Returns (tail bound, max terms).
    pub(crate) fn accumulate_matrix(
        &self,
        beta: f64,
        skip_k0: bool,
        m1lim: usize,
        m2lim: usize,
        disp: &dyn Fn(usize, usize) -> f64,
        out: &mut [f64],
    ) -> Result<(f64, usize)> {
        self.accumulate(&self.q, beta, skip_k0, m1lim, m2lim, disp, out)
    }

    pub(crate) fn accumulate_majorant(
        &self,
        beta: f64,
        skip_k0: bool,
        m1lim: usize,
        m2lim: usize,
        disp: &dyn Fn(usize, usize) -> f64,
        out: &mut [f64],
    ) -> Result<(f64, usize)> {
        self.accumulate(&self.qbar, beta, skip_k0, m1lim, m2lim, disp, out)
    }

    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        table: &QTable,
        beta: f64,
        skip_k0: bool,
        m1lim: usize,
        m2lim: usize,
        disp: &dyn Fn(usize, usize) -> f64,
        out: &mut [f64],
    ) -> Result<(f64, usize)> {
        if !(beta >= 0.0) {
            return Err(FsddeError::Domain(format!("second parameter {beta} must be nonnegative")));
        }
        let nn = table.n * table.n;
        debug_assert_eq!(out.len(), nn);
        let lam = self.lambda;
        let kcap = self.q.levels.min(self.qbar.levels) - 1;
        let lg: Vec<f64> = (0..kcap)
            .map(|k| {
                let a = k as f64 * lam + beta;
                if a > 0.0 { ln_gamma(a) } else { f64::INFINITY }
            })
            .collect();
        let mut bound = 0.0;
        let mut max_terms = 0;
        let mut rounding = 0.0;
        for m1 in 0..=table.m1max.min(m1lim) {
            for m2 in 0..=table.m2max.min(m2lim) {
                let mut u = disp(m1, m2);
                if u < 0.0 {
                    if u > -LATTICE_EPS * self.delays.h() {
                        u = 0.0;
                    } else {
                        continue;
                    }
                }
                let lnu = if u > 0.0 { u.ln() } else { f64::NEG_INFINITY };
                let k0 = if skip_k0 { 1 } else { 0 };
                let mut prev = f64::INFINITY;
                let mut seen = false;
                let mut done = false;
                for k in k0..kcap {
                    let a = k as f64 * lam + beta;
                    let c = if a <= 0.0 {
                        0.0
                    } else if u == 0.0 {
                        if a == 1.0 {
                            1.0
                        } else if a > 1.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        ((a - 1.0) * lnu - lg[k]).exp()
                    };
                    let qb = self.qbar.slice(k + 1, m1, m2)[0];
                    let mt = if qb == 0.0 { 0.0 } else { c * qb };
                    if c.is_infinite() {
                        if qb != 0.0 {
                            return Err(FsddeError::Domain(format!(
                                "kernel is singular at the lattice point ({m1} h1, {m2} h2)"
                            )));
                        }
                        continue;
                    }
                    if c != 0.0 {
                        let q = table.slice(k + 1, m1, m2);
                        for (o, &qv) in out.iter_mut().zip(q) {
                            let term = c * qv;
                            *o += term;
                            rounding += term.abs();
                        }
                    }
                    if mt > 0.0 {
                        seen = true;
                    }
                    let scale = out.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                    let thr = (self.pol.rel_tol * scale).max(self.pol.abs_tol);
                    let past = seen || k > m1 + m2 + 2;
                    if past && a > 2.0 && mt <= prev && mt <= thr {
                        let r = if prev.is_finite() && prev > 0.0 { mt / prev } else { 0.0 };
                        bound += if r < 1.0 { mt * r / (1.0 - r) } else { mt };
                        max_terms = max_terms.max(k + 1);
                        done = true;
                        break;
                    }
                    prev = mt;
                }
                if !done {
                    return Err(FsddeError::NonConvergence {
                        what: format!("delayed Mittag-Leffler series at lattice point ({m1}, {m2})"),
                        terms: kcap,
                    });
                }
            }
        }
        Ok((bound + 4.0 * f64::EPSILON * rounding, max_terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_triple() -> MatrixTriple {
        MatrixTriple::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.0, -2.0]),
        )
        .unwrap()
    }

    #[test]
    fn q_table_first_levels() {
        let m = example_triple();
        let t = build_q_table(&m, 3, 2, 2).unwrap();
        assert_eq!(t.get(1, 0, 0), DMatrix::identity(2, 2));
        assert_eq!(t.get(1, 1, 0), DMatrix::zeros(2, 2));
        assert_eq!(t.get(1, 0, 1), DMatrix::zeros(2, 2));
        assert_eq!(t.get(2, 0, 0), m.a0);
        assert_eq!(t.get(2, 1, 0), m.a1);
        assert_eq!(t.get(2, 0, 1), &m.a2 * &m.a0);
        assert_eq!(t.get(0, 0, 0), DMatrix::zeros(2, 2));
    }

    #[test]
    fn neutral_first_level_is_a2_powers() {
        let m = example_triple();
        let t = build_q_table_with(&m, QBoundary::Neutral, 2, 1, 3).unwrap();
        assert_eq!(t.get(1, 0, 2), &m.a2 * &m.a2);
        assert_eq!(t.get(1, 1, 0), DMatrix::zeros(2, 2));
        assert_eq!(t.get(2, 0, 0), m.a0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = MatrixTriple::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 3), DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(FsddeError::DimensionMismatch(_))));
    }

    #[test]
    fn operator_norm_matches_svd() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 0.0]);
        let svd = m.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(operator_norm(&m), svd, max_relative = 1e-9);
        assert_eq!(operator_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn eval_at_and_before_origin() {
        let d = DelayedMl::new(
            example_triple(),
            DelayPair::new(1.0, 0.5).unwrap(),
            0.5,
            2.0,
            QBoundary::Printed,
            TruncationPolicy::default(),
        )
        .unwrap();
        assert_eq!(d.eval(0.5, -0.25).unwrap().value, DMatrix::zeros(2, 2));
        assert_eq!(d.eval(0.5, 0.0).unwrap().value, DMatrix::identity(2, 2));
        assert_eq!(d.majorant(1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_matrices_nu_one_is_identity() {
        let d = DelayedMl::new(
            MatrixTriple::zeros(3),
            DelayPair::new(1.0, 0.5).unwrap(),
            0.7,
            2.0,
            QBoundary::Printed,
            TruncationPolicy::default(),
        )
        .unwrap();
        for &t in &[0.1, 0.9, 1.7] {
            assert_eq!(d.eval(1.0, t).unwrap().value, DMatrix::identity(3, 3));
        }
    }

    #[test]
    fn beyond_horizon_is_an_error() {
        let d = DelayedMl::new(
            MatrixTriple::zeros(1),
            DelayPair::new(1.0, 1.0).unwrap(),
            0.7,
            1.0,
            QBoundary::Printed,
            TruncationPolicy::default(),
        )
        .unwrap();
        assert!(d.eval(1.0, 1.5).is_err());
    }
}

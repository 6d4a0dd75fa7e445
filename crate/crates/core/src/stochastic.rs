//! Monte-Carlo simulation of the mild solution with a counter-based RNG.
//!
//! Each path owns a ChaCha stream selected by its id, and every time step
//! consumes a fixed block of words, so the draws for (seed, path, step) never
//! depend on how many paths ran before or on which thread.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::{Rng, SeedableRng};

use crate::delayed_ml::QBoundary;
use crate::detsolve::{
    CoefficientFn, Grid, HistoryFn, KernelTables, SystemSpec, Trajectory, history_on_grid, matvec_acc, weight_logs,
};
use crate::error::{FsddeError, Result};
use crate::specfun::TruncationPolicy;

/// σ(t, y, y(t-h1), y(t-h2)) written column-major (n×q) into the last argument.
pub type NoiseEval = dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Diffusion coefficient with its declared constants.
#[derive(Clone)]
pub struct NoiseFn {
    eval: Arc<NoiseEval>,
    q: usize,
    pub lipschitz: f64,
    pub growth: f64,
    is_zero: bool,
}

impl std::fmt::Debug for NoiseFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseFn")
            .field("q", &self.q)
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .finish()
    }
}

impl NoiseFn {
    pub fn new(
        q: usize,
        lipschitz: f64,
        growth: f64,
        eval: impl Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(eval), q: q.max(1), lipschitz, growth, is_zero: false }
    }

    pub fn zero(q: usize) -> Self {
        Self {
            eval: Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0)),
            q: q.max(1),
            lipschitz: 0.0,
            growth: 0.0,
            is_zero: true,
        }
    }

    /// σ ≡ S.
    pub fn constant(s: DMatrix<f64>) -> Self {
        let q = s.ncols();
        let growth = s.norm();
        Self::new(q, 0.0, growth, move |_, _, _, _, out: &mut [f64]| out.copy_from_slice(s.as_slice()))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn eval_into(&self, t: f64, y: &[f64], y1: &[f64], y2: &[f64], out: &mut [f64]) {
        (self.eval)(t, y, y1, y2, out)
    }
}

/// Discretization of the stochastic convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScheme {
    /// Panel averages of the kernel, plus the exact Gaussian integral of the
    /// leading (t - s)^{λ-1} singularity over the adjacent panel.
    #[default]
    Hybrid,
    /// Panel averages of the kernel only.
    PanelAverage,
}

/// Settings of a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub grid: Grid,
    pub p: f64,
    pub gamma: f64,
    pub scheme: NoiseScheme,
    /// Paths whose norm exceeds this raise `PathExplosion`.
    pub cap: f64,
    /// Keep full trajectories in the result (moments are always computed).
    pub keep_paths: bool,
}

impl PathConfig {
    pub fn new(n_paths: usize, seed: u64, grid: Grid) -> Self {
        Self { n_paths, seed, grid, p: 2.0, gamma: 1.0, scheme: NoiseScheme::Hybrid, cap: 1e12, keep_paths: false }
    }

    pub fn validate(&self, lambda: f64) -> Result<()> {
        if self.n_paths < 1 {
            return Err(FsddeError::Domain("n_paths must be at least 1".into()));
        }
        if !(self.p >= 2.0) {
            return Err(FsddeError::Domain(format!("moment order p = {} must be at least 2", self.p)));
        }
        let edge = (self.p - 1.0) / self.p;
        if !(lambda > edge && lambda < 1.0) {
            return Err(FsddeError::Domain(format!("lambda = {lambda} must lie in ((p-1)/p, 1) = ({edge}, 1)")));
        }
        if !(self.gamma > 0.0) {
            return Err(FsddeError::Domain(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.cap > 0.0) {
            return Err(FsddeError::Domain("magnitude cap must be positive".into()));
        }
        Ok(())
    }
}

/// Wiener increments of one path: ΔW_j and J_j = ∫_{t_j}^{t_{j+1}} (t_{j+1} - s)^{λ-1} dW(s),
/// both stored step-major (N×q).
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub q: usize,
    pub dw: Vec<f64>,
    pub singular: Vec<f64>,
}

impl WienerIncrements {
    pub fn step(&self, j: usize) -> &[f64] {
        &self.dw[j * self.q..(j + 1) * self.q]
    }

    pub fn singular_step(&self, j: usize) -> &[f64] {
        &self.singular[j * self.q..(j + 1) * self.q]
    }
}

/// 32-bit words consumed per Wiener component per step: two u64 draws.
const WORDS_PER_COMPONENT: u128 = 4;

fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

fn unit_open(x: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm is finite.
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals from two u64 words (Box-Muller).
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

/// Coefficients (a, b) with J = a z1 + b z2 when ΔW = √Δ z1.
fn singular_coeffs(dt: f64, lambda: f64) -> (f64, f64) {
    if lambda <= 0.5 {
        return (0.0, 0.0);
    }
    let a = dt.powf(lambda - 0.5) / lambda;
    let b2 = dt.powf(2.0 * lambda - 1.0) * (1.0 - lambda).powi(2) / ((2.0 * lambda - 1.0) * lambda * lambda);
    (a, b2.max(0.0).sqrt())
}

/// Increments of path `path_id` for all steps of the grid.
///
/// Step j of component c always uses stream words
/// [(j q + c) * 4, (j q + c + 1) * 4), so any step can be regenerated alone
/// with [`wiener_step`].
pub fn gen_wiener(cfg: &PathConfig, q: usize, lambda: f64, path_id: u64) -> WienerIncrements {
    let steps = cfg.grid.n_steps();
    let dt = cfg.grid.step();
    let sq = dt.sqrt();
    let (a, b) = singular_coeffs(dt, lambda);
    let mut rng = path_rng(cfg.seed, path_id);
    let mut dw = Vec::with_capacity(steps * q);
    let mut singular = Vec::with_capacity(steps * q);
    for _ in 0..steps * q {
        let (z1, z2) = normal_pair(&mut rng);
        dw.push(sq * z1);
        singular.push(a * z1 + b * z2);
    }
    WienerIncrements { q, dw, singular }
}

/// ΔW at one step, regenerated by seeking in the stream.
pub fn wiener_step(cfg: &PathConfig, q: usize, path_id: u64, step: usize) -> Vec<f64> {
    let mut rng = path_rng(cfg.seed, path_id);
    rng.set_word_pos(step as u128 * q as u128 * WORDS_PER_COMPONENT);
    let sq = cfg.grid.step().sqrt();
    (0..q).map(|_| sq * normal_pair(&mut rng).0).collect()
}

/// Σ_j K_{i-j-1} σ_j ΔW_j (plus the singular correction in the hybrid scheme)
/// for one time index i.
pub fn stochastic_convolution(
    tables: &KernelTables,
    integrand: &[DMatrix<f64>],
    increments: &WienerIncrements,
    t_index: usize,
    scheme: NoiseScheme,
) -> Result<DVector<f64>> {
    let n = tables.dim();
    if t_index > tables.steps() || integrand.len() < t_index {
        return Err(FsddeError::Domain(format!("time index {t_index} outside the grid")));
    }
    let dt = tables.step();
    let lam = tables.lambda();
    let mut out = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for (j, s) in integrand.iter().enumerate().take(t_index) {
        let l = t_index - j - 1;
        let a = s * DVector::from_column_slice(increments.step(j));
        tmp.fill(0.0);
        matvec_acc(tables.lag(&tables.w0_lam, l), a.as_slice(), &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += v / dt;
        }
        if scheme == NoiseScheme::Hybrid {
            let b = s * DVector::from_column_slice(increments.singular_step(j));
            for (lag, sm) in &tables.singular {
                if *lag == l {
                    let corr = sm * (b.clone() - &a * (dt.powf(lam - 1.0) / lam));
                    for (o, v) in out.iter_mut().zip(corr.iter()) {
                        *o += v;
                    }
                }
            }
        }
    }
    Ok(DVector::from_vec(out))
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub path_id: u64,
    pub values: Trajectory,
    pub increments: WienerIncrements,
}

/// Per-time Monte-Carlo statistics over [-h, T].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub times: Vec<f64>,
    /// Mean of ‖y(t)‖^p.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean of (max_{-h ≤ s ≤ t} ‖y(s)‖)^p.
    pub running_max_mean: Vec<f64>,
    pub n_paths: usize,
    pub p: f64,
    /// Index of t = 0 in `times`.
    pub origin: usize,
}

impl MomentEstimate {
    /// Aggregates per-path rows in the given order.
    fn from_rows(times: Vec<f64>, origin: usize, p: f64, rows: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let m = times.len();
        let n = rows.len();
        let mut mean = vec![0.0; m];
        let mut rmax = vec![0.0; m];
        for (pw, rm) in rows {
            for i in 0..m {
                mean[i] += pw[i];
                rmax[i] += rm[i];
            }
        }
        let nf = n as f64;
        for i in 0..m {
            mean[i] /= nf;
            rmax[i] /= nf;
        }
        let mut stderr = vec![0.0; m];
        if n > 1 {
            for (pw, _) in rows {
                for i in 0..m {
                    stderr[i] += (pw[i] - mean[i]).powi(2);
                }
            }
            for s in &mut stderr {
                *s = (*s / (nf - 1.0) / nf).sqrt();
            }
        }
        Self { times, mean, stderr, running_max_mean: rmax, n_paths: n, p, origin }
    }

    /// Moments of a set of stored paths, aggregated in path-id order.
    pub fn from_paths(paths: &[SamplePath], p: f64) -> Result<Self> {
        let first = paths.first().ok_or_else(|| FsddeError::Domain("no paths to aggregate".into()))?;
        let grid = first.values.grid;
        let mut sorted: Vec<&SamplePath> = paths.iter().collect();
        sorted.sort_by_key(|s| s.path_id);
        let rows: Vec<_> = sorted.iter().map(|s| path_row(&s.values, p)).collect();
        Ok(Self::from_rows(grid.times(), grid.history_steps(), p, &rows))
    }
}

fn path_row(traj: &Trajectory, p: f64) -> (Vec<f64>, Vec<f64>) {
    let m = traj.len();
    let n = traj.dim();
    let raw = traj.as_slice();
    let mut pw = Vec::with_capacity(m);
    let mut rm = Vec::with_capacity(m);
    let mut run = 0.0f64;
    for r in 0..m {
        let norm = raw[r * n..(r + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt();
        run = run.max(norm);
        pw.push(norm.powf(p));
        rm.push(run.powf(p));
    }
    (pw, rm)
}

/// Result of [`simulate_paths`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub moments: MomentEstimate,
    /// Stored trajectories (empty unless `keep_paths`).
    pub paths: Vec<SamplePath>,
}

/// Prepared state shared by all paths of one run.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    sys: SystemSpec,
    f: CoefficientFn,
    g: NoiseFn,
    cfg: PathConfig,
    tables: KernelTables,
    phi: HistoryFn,
    base: Vec<DVector<f64>>,
}

impl PathSimulator {
    pub fn new(sys: &SystemSpec, phi: &HistoryFn, f: &CoefficientFn, g: &NoiseFn, cfg: PathConfig) -> Result<Self> {
        cfg.validate(sys.lambda)?;
        let dml = sys.delayed_ml(QBoundary::Neutral, TruncationPolicy::default())?;
        let tables = KernelTables::build(&dml, &cfg.grid)?;
        Self::with_tables(sys, phi, f, g, cfg, tables)
    }

    pub fn with_tables(
        sys: &SystemSpec,
        phi: &HistoryFn,
        f: &CoefficientFn,
        g: &NoiseFn,
        cfg: PathConfig,
        tables: KernelTables,
    ) -> Result<Self> {
        cfg.validate(sys.lambda)?;
        let base = history_on_grid(sys, &tables, &cfg.grid, phi)?;
        Ok(Self { sys: sys.clone(), f: f.clone(), g: g.clone(), cfg, tables, phi: phi.clone(), base })
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    pub fn tables(&self) -> &KernelTables {
        &self.tables
    }

    /// Simulates path `path_id` by marching the discretized mild solution.
    pub fn path(&self, path_id: u64) -> Result<SamplePath> {
        let grid = self.cfg.grid;
        let n = self.sys.dim();
        let q = self.g.q();
        let steps = grid.n_steps();
        let dt = grid.step();
        let lam = self.sys.lambda;
        let (h1s, h2s) = (grid.h1_steps() as isize, grid.h2_steps() as isize);
        let inc = gen_wiener(&self.cfg, q, lam, path_id);
        let mut traj = Trajectory::zeros(grid, n);
        traj.set_history(&self.phi);
        traj.at_mut(0).copy_from_slice(self.base[0].as_slice());

        let hybrid = self.cfg.scheme == NoiseScheme::Hybrid && lam > 0.5;
        let corr = dt.powf(lam - 1.0) / lam;
        // v_j = f_j + σ_j ΔW_j / Δ and c_j = σ_j (J_j - ΔW_j Δ^{λ-1}/λ).
        let mut v = vec![0.0; steps * n];
        let mut c = vec![0.0; steps * n];
        let mut sig = vec![0.0; n * q];
        let mut fv = vec![0.0; n];
        for i in 1..=steps {
            let j = i - 1;
            let ji = j as isize;
            {
                let (y, y1, y2) = (traj.at(ji), traj.at(ji - h1s), traj.at(ji - h2s));
                let t = grid.time(ji);
                let vj = &mut v[j * n..(j + 1) * n];
                if !self.f.is_zero() {
                    self.f.eval_into(t, y, y1, y2, &mut fv);
                    vj.copy_from_slice(&fv);
                }
                if !self.g.is_zero() {
                    self.g.eval_into(t, y, y1, y2, &mut sig);
                    let dw = inc.step(j);
                    let js = inc.singular_step(j);
                    let cj = &mut c[j * n..(j + 1) * n];
                    for (k, (&w, &s)) in dw.iter().zip(js).enumerate() {
                        let col = &sig[k * n..(k + 1) * n];
                        for r in 0..n {
                            vj[r] += col[r] * w / dt;
                            cj[r] += col[r] * (s - w * corr);
                        }
                    }
                }
            }
            let mut row = self.base[i].as_slice().to_vec();
            for jj in 0..i {
                let l = i - jj - 1;
                matvec_acc(self.tables.lag(&self.tables.w0_lam, l), &v[jj * n..(jj + 1) * n], &mut row);
            }
            if hybrid && !self.g.is_zero() {
                for (lag, sm) in &self.tables.singular {
                    if *lag < i {
                        let jj = i - 1 - lag;
                        matvec_acc(sm.as_slice(), &c[jj * n..(jj + 1) * n], &mut row);
                    }
                }
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm <= self.cfg.cap) {
                return Err(FsddeError::PathExplosion { path_id, t: grid.time(i as isize), cap: self.cfg.cap });
            }
            traj.at_mut(i as isize).copy_from_slice(&row);
        }
        Ok(SamplePath { path_id, values: traj, increments: inc })
    }

    /// All paths 0..n_paths with moments aggregated in id order. Paths run on
    /// the rayon pool when the `parallel` feature is enabled.
    pub fn run(&self) -> Result<Simulation> {
        #[cfg(feature = "parallel")]
        return self.run_parallel();
        #[cfg(not(feature = "parallel"))]
        return self.run_sequential();
    }

    /// [`run`](Self::run) on the calling thread only.
    pub fn run_sequential(&self) -> Result<Simulation> {
        let out = (0..self.cfg.n_paths as u64).map(|id| self.path_work(id)).collect::<Result<Vec<_>>>()?;
        Ok(self.collect(out))
    }

    #[cfg(feature = "parallel")]
    pub fn run_parallel(&self) -> Result<Simulation> {
        use rayon::prelude::*;
        let ids: Vec<u64> = (0..self.cfg.n_paths as u64).collect();
        let out = ids.par_iter().map(|&id| self.path_work(id)).collect::<Result<Vec<_>>>()?;
        Ok(self.collect(out))
    }

    fn path_work(&self, id: u64) -> Result<PathWork> {
        let sp = self.path(id)?;
        let row = path_row(&sp.values, self.cfg.p);
        Ok((row, if self.cfg.keep_paths { Some(sp) } else { None }))
    }

    fn collect(&self, out: Vec<PathWork>) -> Simulation {
        let mut rows = Vec::with_capacity(out.len());
        let mut paths = Vec::new();
        for (row, sp) in out {
            rows.push(row);
            if let Some(sp) = sp {
                paths.push(sp);
            }
        }
        let grid = self.cfg.grid;
        let moments = MomentEstimate::from_rows(grid.times(), grid.history_steps(), self.cfg.p, &rows);
        Simulation { moments, paths }
    }
}

type PathWork = ((Vec<f64>, Vec<f64>), Option<SamplePath>);

/// Simulates `cfg.n_paths` paths of the mild solution.
pub fn simulate_paths(
    sys: &SystemSpec,
    phi: &HistoryFn,
    f: &CoefficientFn,
    g: &NoiseFn,
    cfg: PathConfig,
) -> Result<Simulation> {
    PathSimulator::new(sys, phi, f, g, cfg)?.run()
}

/// Weighted norm max_{t ∈ [0,T]} E[y*(t)^p] / E_{pλ-p+1}(γ t^{pλ-p+1}).
///
/// `est` must come from a run with the same p.
pub fn weighted_norm(est: &MomentEstimate, grid: &Grid, lambda: f64, gamma: f64) -> Result<f64> {
    let wl = weight_logs(grid, lambda, est.p, gamma)?;
    let mut best = 0.0f64;
    for (k, lw) in wl.iter().enumerate() {
        let num = est.running_max_mean[est.origin + k];
        if num > 0.0 {
            best = best.max((num.ln() - lw).exp());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delayed_ml::DelayPair;

    fn cfg() -> PathConfig {
        let grid = Grid::new(0.1, 1.0, DelayPair::new(0.5, 0.5).unwrap()).unwrap();
        PathConfig::new(4, 7, grid)
    }

    #[test]
    fn increments_are_deterministic_and_seekable() {
        let c = cfg();
        let a = gen_wiener(&c, 2, 0.7, 3);
        let b = gen_wiener(&c, 2, 0.7, 3);
        assert_eq!(a, b);
        for step in [0, 4, 9] {
            assert_eq!(wiener_step(&c, 2, 3, step), a.step(step).to_vec());
        }
        assert_ne!(a, gen_wiener(&c, 2, 0.7, 4));
    }

    #[test]
    fn singular_coefficients_reproduce_covariances() {
        let (dt, lam) = (0.01f64, 0.7f64);
        let (a, b) = singular_coeffs(dt, lam);
        let var_j = dt.powf(2.0 * lam - 1.0) / (2.0 * lam - 1.0);
        assert!((a * a + b * b - var_j).abs() < 1e-12 * var_j);
        assert!((a * dt.sqrt() - dt.powf(lam) / lam).abs() < 1e-14);
    }

    #[test]
    fn config_rejects_boundary_lambda() {
        assert!(cfg().validate(0.5).is_err());
        assert!(cfg().validate(0.51).is_ok());
    }
}

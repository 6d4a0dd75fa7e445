//! Subcommand implementations. Each returns text for stdout and writes files
//! through [`OutputSet`].

use std::path::Path;
use std::time::Instant;

use fsdde_core::FsddeError;
use fsdde_core::delayed_ml::{DelayedMl, QBoundary};
use fsdde_core::specfun::{MlParams, TruncationPolicy, ml_eval_detailed};
use fsdde_core::stability::{
    ConstantsOptions, DelayTerm, compute_constants, contraction_k, fts_certificate, fts_certificate_collapse,
    gronwall_bound, gronwall_extremal, verify_jensen, verify_main_lemma,
};
use fsdde_core::stochastic::PathSimulator;

use crate::config::{ConfigError, LoadedConfig, locate};
use crate::output::{CertificateReport, OutputSet, moments_csv, paths_bin, paths_csv};

pub const EXAMPLE1: &str = include_str!("../../../configs/example1.toml");
pub const EXAMPLE2: &str = include_str!("../../../configs/example2.toml");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] FsddeError),
    #[error("verification failed: {0} check(s) did not pass")]
    VerifyFailed(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for config errors, 3 for numerical failures, 1 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::VerifyFailed(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn mlf(alpha: f64, beta: f64, z: f64) -> CliResult<String> {
    let v = ml_eval_detailed(MlParams::new(alpha, beta), z, TruncationPolicy::default())?;
    Ok(format!("value {:.17e}\nerror_bound {:e}\nterms {}\n", v.value, v.error_bound, v.terms))
}

/// E^{λ,ν}(A0, A1, A2; t) and its scalar majorant for a config's system.
pub fn dml(cfg: &LoadedConfig, nu: f64, t: f64) -> CliResult<String> {
    let ex = cfg.experiment()?;
    let s = &ex.system;
    let boundary: QBoundary = cfg.config.system.boundary.into();
    let e = DelayedMl::new(s.triple.clone(), s.delays, s.lambda, s.horizon, boundary, TruncationPolicy::default())?;
    let v = e.eval(nu, t)?;
    let mut out = String::new();
    for r in 0..v.value.nrows() {
        let row: Vec<String> = (0..v.value.ncols()).map(|c| format!("{:.17e}", v.value[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out.push_str(&format!(
        "error_bound {:e}\nterms {}\nmajorant {:.17e}\n",
        v.error_bound,
        v.terms,
        e.majorant(nu, t)?
    ));
    Ok(out)
}

fn run_simulation(cfg: &LoadedConfig, set: &mut OutputSet) -> CliResult<String> {
    let ex = cfg.experiment()?;
    let mut paths = ex.paths;
    let out = &cfg.config.output;
    paths.keep_paths = out.paths_csv || out.paths_bin;
    let sim = PathSimulator::new(&ex.system, &ex.phi, &ex.drift, &ex.noise, paths)?.run()?;
    set.write(&out.moments_csv, &moments_csv(&sim.moments)?)?;
    if out.paths_csv {
        set.write("paths.csv", &paths_csv(&sim.paths)?)?;
    }
    if out.paths_bin {
        set.write("paths.bin", &paths_bin(&sim.paths, ex.noise.q()))?;
    }
    let last = sim.moments.mean.last().copied().unwrap_or(f64::NAN);
    Ok(format!("simulated {} paths on {} steps; E|y(T)|^p = {last:e}\n", sim.moments.n_paths, ex.grid.n_steps()))
}

pub fn simulate(cfg: &LoadedConfig, out_dir: &Path) -> CliResult<String> {
    let start = Instant::now();
    let mut set = OutputSet::create(out_dir)?;
    let msg = run_simulation(cfg, &mut set)?;
    let sim = &cfg.config.simulation;
    set.finish("simulate", &cfg.text, sim.seed, sim.n_paths, start.elapsed().as_secs_f64())?;
    Ok(msg)
}

/// How ε is chosen for a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Value(f64),
    /// ε = multiple · M̃ e^{C(3T-h1-h2)} · offset.
    Multiple(f64),
}

pub fn certificate_report(cfg: &LoadedConfig, epsilon: Option<EpsilonChoice>) -> CliResult<CertificateReport> {
    let ex = cfg.experiment()?;
    let c = &cfg.config;
    let choice = match (epsilon, c.certificate.epsilon, c.certificate.epsilon_multiple) {
        (Some(e), _, _) => e,
        (None, Some(e), _) => EpsilonChoice::Value(e),
        (None, None, Some(m)) => EpsilonChoice::Multiple(m),
        (None, None, None) => {
            return Err(ConfigError {
                line: locate(&cfg.text, "certificate", None),
                message: "certificate.epsilon or certificate.epsilon_multiple is required (or pass --epsilon)".into(),
            }
            .into());
        }
    };
    let sim = &c.simulation;
    let opts = ConstantsOptions {
        boundary: c.certificate.constants_boundary.map(Into::into).unwrap_or(QBoundary::Printed),
        cp_override: c.certificate.cp,
        ..ConstantsOptions::default()
    };
    let s = &ex.system;
    let constants = compute_constants(s, &ex.phi, &ex.drift, &ex.noise, sim.p, sim.horizon, opts)?;
    for w in &constants.warnings {
        eprintln!("{w}");
    }
    let contraction = contraction_k(&constants, sim.p, s.lambda, sim.gamma, sim.horizon)?;
    let certificate = match choice {
        EpsilonChoice::Value(e) => fts_certificate(&constants, s, sim.p, sim.horizon, e)?,
        EpsilonChoice::Multiple(m) => fts_certificate_collapse(&constants, s, sim.p, sim.horizon, m)?,
    };
    Ok(CertificateReport {
        lambda: s.lambda,
        p: sim.p,
        gamma: sim.gamma,
        horizon: sim.horizon,
        h: s.delays.h(),
        constants,
        contraction,
        certificate,
    })
}

fn run_certificate(cfg: &LoadedConfig, epsilon: Option<EpsilonChoice>, set: &mut OutputSet) -> CliResult<String> {
    let report = certificate_report(cfg, epsilon)?;
    let name = &cfg.config.output.certificate;
    set.write(name, report.text().as_bytes())?;
    let stem = name.rsplit_once('.').map(|(s, _)| s).unwrap_or(name);
    set.write(&format!("{stem}.csv"), &report.csv()?)?;
    let c = &report.certificate;
    Ok(format!(
        "K = {:e} (contraction: {})\nLambda = {:e}\nln_epsilon = {:e}\n{}\n",
        report.contraction.k_value,
        report.contraction.is_contraction,
        c.lambda_threshold,
        c.ln_epsilon,
        report.verdict_line()
    ))
}

pub fn certify(cfg: &LoadedConfig, epsilon: Option<EpsilonChoice>, out_dir: &Path) -> CliResult<String> {
    let start = Instant::now();
    let mut set = OutputSet::create(out_dir)?;
    let msg = run_certificate(cfg, epsilon, &mut set)?;
    let sim = &cfg.config.simulation;
    set.finish("certify", &cfg.text, sim.seed, sim.n_paths, start.elapsed().as_secs_f64())?;
    Ok(msg)
}

/// Simulation and certificate for a shipped example, with one manifest.
pub fn reproduce(name: &str, out_dir: &Path) -> CliResult<String> {
    let text = match name {
        "example1" => EXAMPLE1,
        "example2" => EXAMPLE2,
        other => {
            return Err(ConfigError {
                line: None,
                message: format!("unknown example '{other}' (expected example1 or example2)"),
            }
            .into());
        }
    };
    let cfg = LoadedConfig::parse(text)?;
    let start = Instant::now();
    let mut set = OutputSet::create(out_dir)?;
    set.write("config.toml", text.as_bytes())?;
    let mut msg = run_simulation(&cfg, &mut set)?;
    msg.push_str(&run_certificate(&cfg, None, &mut set)?);
    let sim = &cfg.config.simulation;
    set.finish(&format!("reproduce {name}"), text, sim.seed, sim.n_paths, start.elapsed().as_secs_f64())?;
    Ok(msg)
}

pub fn sweep_gamma(cfg: &LoadedConfig, gammas: &[f64]) -> CliResult<Vec<u8>> {
    let ex = cfg.experiment()?;
    let c = &cfg.config;
    let sim = &c.simulation;
    let opts = ConstantsOptions {
        boundary: c.certificate.constants_boundary.map(Into::into).unwrap_or(QBoundary::Printed),
        cp_override: c.certificate.cp,
        ..ConstantsOptions::default()
    };
    let s = &ex.system;
    let constants = compute_constants(s, &ex.phi, &ex.drift, &ex.noise, sim.p, sim.horizon, opts)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["gamma", "k", "is_contraction"]).map_err(std::io::Error::from)?;
    for &g in gammas {
        let k = contraction_k(&constants, sim.p, s.lambda, g, sim.horizon)?;
        w.write_record([format!("{g:e}"), format!("{:e}", k.k_value), k.is_contraction.to_string()])
            .map_err(std::io::Error::from)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Adds λ = (p-1)/p to the sweep; those cases are reported as skipped.
    pub include_boundary: bool,
    /// Perturbs the Mittag-Leffler side of every identity by a relative 1e-6,
    /// so that a working verifier must fail.
    pub inject_fault: bool,
}

/// Runs the identity, Gronwall and Jensen sweeps. Returns the report and the
/// number of failures.
pub fn verify(opts: VerifyOptions) -> CliResult<(String, usize)> {
    let pol = TruncationPolicy::default();
    let mut out = String::from("p      lambda   gamma  t     gap_series  gap_quad    status\n");
    let mut failures = 0;
    for p in [1.0f64, 1.5, 2.0] {
        let boundary = (p - 1.0) / p;
        let mut lambdas = vec![0.6, 0.75, 0.9];
        if opts.include_boundary {
            lambdas.insert(0, boundary);
        }
        for &lambda in &lambdas {
            for gamma in [0.5, 1.0, 5.0] {
                for t in [0.5, 1.0, 2.0] {
                    let prefix = format!("{p:<6} {lambda:<8.4} {gamma:<6} {t:<5}");
                    if lambda <= boundary {
                        out.push_str(&format!("{prefix} {:<11} {:<11} SKIPPED(boundary)\n", "-", "-"));
                        continue;
                    }
                    let c = verify_main_lemma(p, lambda, gamma, t, pol)?;
                    let bump = if opts.inject_fault { 1e-6 * c.lhs_series_scaled.abs().max(1.0) } else { 0.0 };
                    let (gs, gq) = (c.gap_series + bump, c.gap_quad + bump);
                    let ok = gs < 1e-8 && gq < 1e-6;
                    if !ok {
                        failures += 1;
                    }
                    out.push_str(&format!("{prefix} {gs:<11.3e} {gq:<11.3e} {}\n", if ok { "PASS" } else { "FAIL" }));
                }
            }
        }
    }

    let (gron_cases, gron_fail) = gronwall_sweep()?;
    failures += gron_fail;
    out.push_str(&format!("gronwall: {} of {gron_cases} instances dominated\n", gron_cases - gron_fail));

    let mut jensen_fail = 0;
    for k in 0..50 {
        let m = 1 + k % 9;
        let values: Vec<f64> = (0..m).map(|i| 10.0 * frac((k * 13 + i) as f64 * GOLDEN)).collect();
        let p = 1.0 + 4.0 * frac(k as f64 * GOLDEN * 0.5) + 0.01;
        if !verify_jensen(&values, p)? {
            jensen_fail += 1;
        }
    }
    failures += jensen_fail;
    out.push_str(&format!("jensen: {} of 50 vectors satisfied\n", 50 - jensen_fail));
    Ok((out, failures))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Bound against the extremal solution on 20 deterministic instances.
fn gronwall_sweep() -> CliResult<(usize, usize)> {
    let cases = 20;
    let mut failures = 0;
    for k in 0..cases {
        let r = |j: usize| frac((k * 7 + j) as f64 * GOLDEN + 0.1 * j as f64);
        let (g0, g1, b0, c10, c20) = (0.1 + 2.0 * r(0), r(1), r(2), 0.01 + r(3), 0.01 + r(4));
        let (h1, h2) = ((1.0 + 7.0 * r(5)).round() * 0.1, (1.0 + 7.0 * r(6)).round() * 0.1);
        let p0 = 2.0 * r(7);
        let g = move |t: f64| g0 + g1 * t;
        let dg = move |_: f64| g1;
        let b = move |t: f64| b0 * (1.0 + 0.5 * t.sin().powi(2));
        let c1 = move |t: f64| c10 * (1.0 + 0.5 * t.cos());
        let c2 = move |_: f64| c20;
        let psi = move |s: f64| p0 * (1.0 + (3.0 * s).cos().abs());
        let terms = [DelayTerm { c: &c1, h: h1 }, DelayTerm { c: &c2, h: h2 }];
        let path = gronwall_extremal(&g, &dg, &b, &terms, &psi, 0.0, 2.0, 1e-3);
        for (t, u) in path.iter().step_by(50) {
            if *u > gronwall_bound(&g, &b, &terms, &psi, 0.0, *t)? * (1.0 + 1e-8) {
                failures += 1;
                break;
            }
        }
    }
    Ok((cases, failures))
}

//! Experiment configuration files.
//!
//! A config is TOML with five one-level blocks: `system`, `coefficients`,
//! `simulation`, `certificate` and `output`. Every failure carries the line of
//! the offending key when one can be found.

use fsdde_core::FsddeError;
use fsdde_core::delayed_ml::{DelayPair, MatrixTriple, QBoundary};
use fsdde_core::detsolve::{CoefficientFn, Grid, HistoryFn, SystemSpec};
use fsdde_core::stochastic::{NoiseFn, NoiseScheme, PathConfig};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::builtins;

/// Config error with an optional 1-based line number.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    #[default]
    Neutral,
    Printed,
}

impl From<BoundaryTag> for QBoundary {
    fn from(b: BoundaryTag) -> Self {
        match b {
            BoundaryTag::Neutral => QBoundary::Neutral,
            BoundaryTag::Printed => QBoundary::Printed,
        }
    }
}

/// Builtin coefficient functions, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientTag {
    /// 0.
    Zero,
    /// cos(y_i(t - h1)).
    CosDelay1,
    /// sin(y_i(t - h2)).
    SinDelay2,
    /// sin(t + y_i(t - h2) + y_i(t - h1)).
    SinSum,
    /// cos(t + y_i(t - h2) + y_i(t - h1)).
    CosSum,
    /// y_i(t).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryTag {
    Zero,
    /// history_value_i · e^t.
    Exp,
    /// history_value.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeTag {
    #[default]
    Hybrid,
    PanelAverage,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub dim: usize,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub h1: f64,
    pub h2: f64,
    pub lambda: f64,
    #[serde(default)]
    pub boundary: BoundaryTag,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsBlock {
    pub drift: CoefficientTag,
    #[serde(default = "one")]
    pub drift_scale: f64,
    pub noise: CoefficientTag,
    #[serde(default = "one")]
    pub noise_scale: f64,
    pub history: HistoryTag,
    #[serde(default)]
    pub history_value: Option<Vec<f64>>,
}

fn two() -> f64 {
    2.0
}

fn default_cap() -> f64 {
    1e12
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub scheme: SchemeTag,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CertificateBlock {
    /// ε itself.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// ε as a multiple of M̃ e^{C(3T-h1-h2)} · offset.
    #[serde(default)]
    pub epsilon_multiple: Option<f64>,
    /// Replaces the BDG constant C_p.
    #[serde(default)]
    pub cp: Option<f64>,
    /// Q boundary used for M1..M4 (default printed).
    #[serde(default)]
    pub constants_boundary: Option<BoundaryTag>,
}

fn moments_name() -> String {
    "moments.csv".into()
}

fn certificate_name() -> String {
    "certificate.txt".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub paths_csv: bool,
    #[serde(default)]
    pub paths_bin: bool,
    #[serde(default = "moments_name")]
    pub moments_csv: String,
    #[serde(default = "certificate_name")]
    pub certificate: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { paths_csv: false, paths_bin: false, moments_csv: moments_name(), certificate: certificate_name() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub coefficients: CoefficientsBlock,
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub certificate: CertificateBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A parsed config with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub text: String,
    pub config: ExperimentConfig,
}

/// Everything needed to run an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: SystemSpec,
    pub phi: HistoryFn,
    pub drift: CoefficientFn,
    pub noise: NoiseFn,
    pub grid: Grid,
    pub paths: PathConfig,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = ...` inside `[block]`, or of the block header.
pub fn locate(text: &str, block: &str, key: Option<&str>) -> Option<usize> {
    let mut in_block = false;
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_block = line.trim_start_matches('[').trim_end_matches(']').trim() == block;
            if in_block {
                header = Some(i + 1);
            }
            continue;
        }
        if in_block && let Some(k) = key {
            let name = line.split('=').next().unwrap_or("").trim();
            if line.contains('=') && name == k {
                return Some(i + 1);
            }
        }
    }
    header
}

fn err(text: &str, block: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line: locate(text, block, Some(key)), message: format!("{block}.{key}: {}", message.into()) }
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let loaded = Self { text: text.to_string(), config };
        loaded.experiment()?;
        Ok(loaded)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    /// Builds the system, coefficients and grid, checking every value.
    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        let t = self.text.as_str();
        let c = &self.config;
        let s = &c.system;
        let n = s.dim;
        if n == 0 {
            return Err(err(t, "system", "dim", "must be at least 1"));
        }
        let mat = |key: &str, v: &[f64]| -> Result<DMatrix<f64>, ConfigError> {
            if v.len() != n * n {
                return Err(err(
                    t,
                    "system",
                    key,
                    format!("expected {} entries for a {n}x{n} matrix, found {}", n * n, v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(err(t, "system", key, "entries must be finite"));
            }
            Ok(DMatrix::from_row_slice(n, n, v))
        };
        let triple = MatrixTriple::new(mat("a0", &s.a0)?, mat("a1", &s.a1)?, mat("a2", &s.a2)?)
            .map_err(|e| err(t, "system", "a0", e.to_string()))?;
        let delays = DelayPair::new(s.h1, s.h2).map_err(|e| err(t, "system", "h1", e.to_string()))?;
        if !(s.lambda > 0.0 && s.lambda < 1.0) {
            return Err(err(t, "system", "lambda", format!("{} must lie in (0, 1)", s.lambda)));
        }
        let sim = &c.simulation;
        if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
            return Err(err(t, "simulation", "horizon", "must be positive"));
        }
        let system = SystemSpec::new(triple, delays, s.lambda, sim.horizon)
            .map_err(|e| err(t, "system", "lambda", e.to_string()))?;
        let grid = Grid::new(sim.dt, sim.horizon, delays).map_err(|e| match e {
            FsddeError::NonCommensurateGrid { step, suggested } => err(
                t,
                "simulation",
                "dt",
                format!("step {step} does not divide the delays and horizon; nearest commensurate step is {suggested}"),
            ),
            other => err(t, "simulation", "dt", other.to_string()),
        })?;
        if sim.n_paths == 0 {
            return Err(err(t, "simulation", "n_paths", "must be at least 1"));
        }
        if !(sim.p >= 2.0) {
            return Err(err(t, "simulation", "p", "must be at least 2"));
        }
        if !(sim.gamma > 0.0) {
            return Err(err(t, "simulation", "gamma", "must be positive"));
        }
        if !(sim.cap > 0.0) {
            return Err(err(t, "simulation", "cap", "must be positive"));
        }
        let co = &c.coefficients;
        let q = sim.q.unwrap_or(n);
        if q == 0 {
            return Err(err(t, "simulation", "q", "must be at least 1"));
        }
        if co.noise != CoefficientTag::Zero && q != n {
            return Err(err(t, "simulation", "q", format!("builtin noise is diagonal and needs q = dim = {n}")));
        }
        for (key, v) in [("drift_scale", co.drift_scale), ("noise_scale", co.noise_scale)] {
            if !v.is_finite() {
                return Err(err(t, "coefficients", key, "must be finite"));
            }
        }
        let hv = match (&co.history, &co.history_value) {
            (HistoryTag::Zero, _) => vec![0.0; n],
            (_, Some(v)) if v.len() == n && v.iter().all(|x| x.is_finite()) => v.clone(),
            (_, Some(_)) => {
                return Err(err(t, "coefficients", "history_value", format!("expected {n} finite entries")));
            }
            (HistoryTag::Exp, None) => vec![1.0; n],
            (HistoryTag::Constant, None) => {
                return Err(err(t, "coefficients", "history", "constant history needs history_value"));
            }
        };
        let phi = builtins::history(co.history, &hv, &grid);
        let drift = builtins::drift(co.drift, co.drift_scale, n, sim.p);
        let noise = builtins::noise(co.noise, co.noise_scale, n, q, sim.p);
        let mut paths = PathConfig::new(sim.n_paths, sim.seed, grid);
        paths.p = sim.p;
        paths.gamma = sim.gamma;
        paths.cap = sim.cap;
        paths.scheme = match sim.scheme {
            SchemeTag::Hybrid => NoiseScheme::Hybrid,
            SchemeTag::PanelAverage => NoiseScheme::PanelAverage,
        };
        if let Some(e) = c.certificate.epsilon
            && !(e > 0.0)
        {
            return Err(err(t, "certificate", "epsilon", "must be positive"));
        }
        if let Some(m) = c.certificate.epsilon_multiple
            && !(m > 0.0)
        {
            return Err(err(t, "certificate", "epsilon_multiple", "must be positive"));
        }
        Ok(Experiment { system, phi, drift, noise, grid, paths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[system]
dim = 1
a0 = [-1.0]
a1 = [0.0]
a2 = [0.0]
h1 = 0.5
h2 = 0.5
lambda = 0.8

[coefficients]
drift = "zero"
noise = "zero"
history = "zero"

[simulation]
horizon = 1.0
dt = 0.05
n_paths = 4
seed = 1
"#;

    #[test]
    fn parses_minimal_config() {
        let c = LoadedConfig::parse(GOOD).unwrap();
        assert_eq!(c.config.simulation.p, 2.0);
        assert_eq!(c.config.output.moments_csv, "moments.csv");
    }

    #[test]
    fn reports_line_of_bad_value() {
        let bad = GOOD.replace("dt = 0.05", "dt = 0.3");
        let e = LoadedConfig::parse(&bad).unwrap_err();
        assert_eq!(e.line, Some(18));
        assert!(e.message.contains("0.25"), "{}", e.message);
        let typo = GOOD.replace("lambda = 0.8", "lambda = 0.8\nlamda = 1");
        assert_eq!(LoadedConfig::parse(&typo).unwrap_err().line, Some(10));
        let dims = GOOD.replace("a1 = [0.0]", "a1 = [0.0, 1.0]");
        assert_eq!(LoadedConfig::parse(&dims).unwrap_err().line, Some(5));
    }
}

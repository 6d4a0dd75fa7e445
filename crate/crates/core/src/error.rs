use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FsddeError {
    #[error("pole of the gamma function at x = {0}")]
    Pole(f64),
    #[error("overflow evaluating {0}")]
    Overflow(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("series did not converge after {terms} terms ({what})")]
    NonConvergence { what: String, terms: usize },
    #[error("precision loss: {0}")]
    PrecisionLoss(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("grid step {step} is not commensurate with the delays; nearest usable step is {suggested}")]
    NonCommensurateGrid { step: f64, suggested: f64 },
    #[error("Picard iteration did not converge in {iterations} iterations (last ratio {last_ratio:.4})")]
    NoConvergence { iterations: usize, last_ratio: f64 },
    #[error("path {path_id} exceeded magnitude cap {cap:e} at t = {t}")]
    PathExplosion { path_id: u64, t: f64, cap: f64 },
}

pub type Result<T> = std::result::Result<T, FsddeError>;

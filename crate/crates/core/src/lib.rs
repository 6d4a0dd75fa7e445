//! Numerical core for Caputo-type fractional stochastic neutral delay equations
//!
//! D^λ[y(t) - A2 y(t-h2)] = A0 y(t) + A1 y(t-h1) + f(t, y(t), y(t-h1), y(t-h2)) + σ(..) dW/dt
//!
//! Modules build on each other bottom-up: special functions, the delayed
//! Mittag-Leffler matrix function, the deterministic solver, the Monte-Carlo
//! engine and the stability constants.

pub mod delayed_ml;
pub mod detsolve;
pub mod error;
pub mod specfun;
pub mod stability;
pub mod stochastic;

pub use error::{FsddeError, Result};

//! Gamma, beta and Mittag-Leffler functions.
//!
//! Gamma and log-gamma come from `statrs`; the wrappers here add pole and
//! overflow reporting. The Mittag-Leffler routines are plain power series with
//! an explicit tail estimate.

use crate::error::{FsddeError, Result};

/// Largest argument for which Γ(x) is finite in double precision.
pub const GAMMA_MAX_ARG: f64 = 171.624_376_956_302_7;

/// Truncation controls for series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 1e-300, max_terms: 500 }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) || self.max_terms < 1 {
            return Err(FsddeError::Domain(format!("invalid truncation policy {self:?}")));
        }
        Ok(())
    }

    fn threshold(&self, sum: f64) -> f64 {
        (self.rel_tol * sum.abs()).max(self.abs_tol)
    }
}

/// Parameters (α, β) of E_{α,β}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// One-parameter function E_α = E_{α,1}.
    pub fn one(alpha: f64) -> Self {
        Self { alpha, beta: 1.0 }
    }
}

/// A series sum with its truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub error_bound: f64,
    pub terms: usize,
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// (x-1)! for positive integers x ≤ 171, accumulated exactly where possible.
fn factorial_gamma(x: f64) -> Option<f64> {
    if (1.0..=171.0).contains(&x) && x == x.floor() {
        Some((2..x as u32).fold(1.0, |acc, k| acc * k as f64))
    } else {
        None
    }
}

/// Γ(x).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(FsddeError::Domain("gamma of NaN".into()));
    }
    if is_nonpositive_integer(x) {
        return Err(FsddeError::Pole(x));
    }
    if x > GAMMA_MAX_ARG {
        return Err(FsddeError::Overflow(format!("gamma({x})")));
    }
    if let Some(g) = factorial_gamma(x) {
        return Ok(g);
    }
    let mut g = statrs::function::gamma::gamma(x);
    if !g.is_finite() && x > 0.0 {
        // statrs overflows internally just below the true limit.
        g = ln_gamma(x).exp();
    }
    if !g.is_finite() {
        return Err(FsddeError::Overflow(format!("gamma({x})")));
    }
    Ok(g)
}

/// ln|Γ(x)| for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if let Some(g) = factorial_gamma(x) {
        return g.ln();
    }
    statrs::function::gamma::ln_gamma(x)
}

/// 1/Γ(x), exactly zero at the poles.
pub fn recip_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x > GAMMA_MAX_ARG {
        return (-ln_gamma(x)).exp();
    }
    if x < -GAMMA_MAX_ARG {
        // Reflection: 1/Γ(x) = -x Γ(-x) sin(πx)/π, and Γ(-x) overflows.
        let s = (std::f64::consts::PI * x).sin();
        let mag = (ln_gamma(-x) + (-x).ln()).exp();
        return -s * mag / std::f64::consts::PI;
    }
    match factorial_gamma(x) {
        Some(g) => 1.0 / g,
        None => 1.0 / gamma_fn(x).unwrap_or(f64::INFINITY),
    }
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(FsddeError::Domain(format!("beta({a}, {b}) needs positive arguments")));
    }
    if a + b < GAMMA_MAX_ARG {
        return Ok(gamma_fn(a)? * gamma_fn(b)? / gamma_fn(a + b)?);
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

/// ln B(a, b) for positive arguments.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// x^{a-1}/Γ(a) for x ≥ 0, with x^0 = 1 at x = 0.
///
/// This is the Riemann-Liouville kernel; its antiderivative is the same
/// function with a + 1. Returns +∞ at x = 0 when a < 1.
pub fn rl_kernel(a: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if a == 1.0 {
            1.0
        } else if a > 1.0 || is_nonpositive_integer(a) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if a <= 0.0 {
        return x.powf(a - 1.0) * recip_gamma(a);
    }
    ((a - 1.0) * x.ln() - ln_gamma(a)).exp()
}

/// E_{α,β}(z) by direct summation.
pub fn ml_eval(p: MlParams, z: f64, pol: TruncationPolicy) -> Result<f64> {
    ml_eval_detailed(p, z, pol).map(|s| s.value)
}

/// E_{α,β}(z) with the truncation estimate and term count.
///
/// Fails with `PrecisionLoss` when cancellation between alternating terms
/// would swamp the requested tolerance, and with `NonConvergence` when
/// `max_terms` is exhausted.
pub fn ml_eval_detailed(p: MlParams, z: f64, pol: TruncationPolicy) -> Result<SeriesValue> {
    pol.validate()?;
    if !(p.alpha > 0.0) {
        return Err(FsddeError::Domain(format!("Mittag-Leffler alpha = {} must be positive", p.alpha)));
    }
    if !z.is_finite() {
        return Err(FsddeError::Domain("Mittag-Leffler argument is not finite".into()));
    }
    let mut sum = recip_gamma(p.beta);
    let mut abs_sum = sum.abs();
    if z == 0.0 {
        return Ok(SeriesValue { value: sum, error_bound: 0.0, terms: 1 });
    }
    let lnz = z.abs().ln();
    let mut prev = sum.abs();
    for n in 1..pol.max_terms {
        let arg = p.alpha * n as f64 + p.beta;
        let sign = if z < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
        let term = if arg > 0.0 {
            sign * (n as f64 * lnz - ln_gamma(arg)).exp()
        } else {
            sign * z.abs().powi(n as i32) * recip_gamma(arg)
        };
        if !term.is_finite() {
            return Err(FsddeError::Overflow(format!("E_{{{},{}}}({z})", p.alpha, p.beta)));
        }
        sum += term;
        abs_sum += term.abs();
        let mag = term.abs();
        // Past the turning point of Γ the ratio of successive terms decreases
        // monotonically, so a geometric tail bound applies.
        if arg > 2.0 && mag <= prev && mag <= pol.threshold(sum) {
            let ratio = if prev > 0.0 { mag / prev } else { 0.0 };
            let bound = if ratio < 1.0 { mag * ratio / (1.0 - ratio) } else { mag };
            let rounding = 4.0 * f64::EPSILON * abs_sum;
            if rounding > pol.threshold(sum).max(64.0 * f64::EPSILON * sum.abs()) {
                return Err(FsddeError::PrecisionLoss(format!(
                    "E_{{{},{}}}({z}): cancellation error ~{rounding:e} against value {sum:e}",
                    p.alpha, p.beta
                )));
            }
            return Ok(SeriesValue { value: sum, error_bound: bound + rounding, terms: n + 1 });
        }
        prev = mag;
    }
    Err(FsddeError::NonConvergence { what: format!("E_{{{},{}}}({z})", p.alpha, p.beta), terms: pol.max_terms })
}

/// ln E_{α,β}(z) for z ≥ 0 and β > 0, summed in log space.
///
/// Covers arguments where E itself overflows double precision. The term cap
/// is `max_terms` of the policy, so callers with large z should pass a
/// generous one.
pub fn ml_ln(p: MlParams, z: f64, pol: TruncationPolicy) -> Result<f64> {
    if !(p.alpha > 0.0) || !(p.beta > 0.0) || !(z >= 0.0) || !z.is_finite() {
        return Err(FsddeError::Domain(format!(
            "log Mittag-Leffler needs alpha, beta > 0 and finite z >= 0 (got {}, {}, {z})",
            p.alpha, p.beta
        )));
    }
    let first = -ln_gamma(p.beta);
    if z == 0.0 {
        return Ok(first);
    }
    let lnz = z.ln();
    let ln_tol = pol.rel_tol.ln() - 2.0;
    // Running log-sum-exp with a moving reference point.
    let mut m = first;
    let mut acc = 1.0;
    let mut prev = first;
    for n in 1..pol.max_terms {
        let arg = p.alpha * n as f64 + p.beta;
        let lt = n as f64 * lnz - ln_gamma(arg);
        if lt > m {
            acc = acc * (m - lt).exp() + 1.0;
            m = lt;
        } else {
            acc += (lt - m).exp();
        }
        if arg > 2.0 && lt < prev && lt - m < ln_tol {
            return Ok(m + acc.ln());
        }
        prev = lt;
    }
    Err(FsddeError::NonConvergence { what: format!("ln E_{{{},{}}}({z})", p.alpha, p.beta), terms: pol.max_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const POL: TruncationPolicy = TruncationPolicy { rel_tol: 1e-12, abs_tol: 1e-300, max_terms: 500 };

    #[test]
    fn gamma_closed_forms() {
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert_relative_eq!(gamma_fn(0.5).unwrap(), std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma_fn(5.0).unwrap(), 24.0, max_relative = 1e-14);
        assert!(matches!(gamma_fn(0.0), Err(FsddeError::Pole(_))));
        assert!(matches!(gamma_fn(-3.0), Err(FsddeError::Pole(_))));
        assert!(matches!(gamma_fn(180.0), Err(FsddeError::Overflow(_))));
    }

    #[test]
    fn recip_gamma_poles_and_values() {
        assert_eq!(recip_gamma(0.0), 0.0);
        assert_eq!(recip_gamma(-4.0), 0.0);
        assert_relative_eq!(recip_gamma(1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(recip_gamma(0.5), 1.0 / std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(recip_gamma(150.0), (-ln_gamma(150.0)).exp(), max_relative = 1e-12);
    }

    #[test]
    fn beta_closed_forms() {
        assert_relative_eq!(beta_fn(1.0, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(beta_fn(0.5, 0.5).unwrap(), std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(beta_fn(2.0, 3.0).unwrap(), 1.0 / 12.0, max_relative = 1e-14);
        assert!(beta_fn(0.0, 1.0).is_err());
        assert_relative_eq!(beta_fn(100.0, 90.0).unwrap(), ln_beta(100.0, 90.0).exp(), max_relative = 1e-10);
    }

    #[test]
    fn ml_closed_forms() {
        assert_relative_eq!(ml_eval(MlParams::one(1.0), 1.0, POL).unwrap(), std::f64::consts::E, max_relative = 1e-13);
        assert_eq!(ml_eval(MlParams::one(0.5), 0.0, POL).unwrap(), 1.0);
        assert_relative_eq!(ml_eval(MlParams::one(2.0), -1.0, POL).unwrap(), 1f64.cos(), max_relative = 1e-13);
        // E_{1/2}(0.7) = exp(0.49) erfc(-0.7)
        assert_relative_eq!(ml_eval(MlParams::one(0.5), 0.7, POL).unwrap(), 2.73870210256132, max_relative = 1e-12);
    }

    #[test]
    fn ml_reports_cancellation() {
        assert!(matches!(ml_eval(MlParams::one(1.0), -30.0, POL), Err(FsddeError::PrecisionLoss(_))));
    }

    #[test]
    fn ml_reports_nonconvergence() {
        let pol = TruncationPolicy { max_terms: 10, ..POL };
        assert!(matches!(ml_eval(MlParams::one(0.5), 5.0, pol), Err(FsddeError::NonConvergence { .. })));
    }

    #[test]
    fn ml_ln_matches_direct_sum() {
        for &(a, b, z) in &[(0.5, 1.0, 2.0), (0.9, 0.9, 7.0), (0.2, 1.0, 0.5), (1.0, 1.0, 20.0)] {
            let d = ml_eval(MlParams::new(a, b), z, POL).unwrap();
            let l = ml_ln(MlParams::new(a, b), z, TruncationPolicy { max_terms: 100_000, ..POL }).unwrap();
            assert_relative_eq!(l.exp(), d, max_relative = 1e-12);
        }
    }

    #[test]
    fn ml_ln_beyond_overflow() {
        let pol = TruncationPolicy { max_terms: 1_000_000, ..POL };
        // E_1(z) = e^z
        assert_relative_eq!(ml_ln(MlParams::one(1.0), 2000.0, pol).unwrap(), 2000.0, max_relative = 1e-12);
        // E_{1/2}(z) ~ 2 exp(z^2) for large z
        let l = ml_ln(MlParams::one(0.5), 40.0, pol).unwrap();
        assert_relative_eq!(l, 1600.0 + 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn rl_kernel_conventions() {
        assert_eq!(rl_kernel(1.0, 0.0), 1.0);
        assert_eq!(rl_kernel(1.5, 0.0), 0.0);
        assert!(rl_kernel(0.5, 0.0).is_infinite());
        assert_eq!(rl_kernel(0.5, -1.0), 0.0);
        assert_relative_eq!(rl_kernel(3.0, 2.0), 2.0, max_relative = 1e-14);
    }
}

//! The two Chernoff bound forms and the geometric series used to collapse
//! union-bound summations into closed forms.
//!
//! For independent binary variables with aggregated mean `mu` and excess
//! factor `delta`, the probability that the sum reaches `(1 + delta) * mu`
//! is at most
//!
//! ```text
//! (e^delta / (1 + delta)^(1 + delta))^mu      (tight form)
//! e^{-min(delta^2, delta) * mu / 3}           (loose form)
//! ```
//!
//! The tight form never exceeds the loose one. Both are evaluated in
//! log-space so large `mu * delta` products cannot overflow. Raw values may
//! exceed 1 when summed by callers; clamping to `[0, 1]` is the curve
//! assembler's job, not this module's.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChernoffError {
    #[error("excess factor delta = {0} must be > 0 (negative thresholds make the bound trivial)")]
    NonPositiveDelta(f64),
    #[error("aggregated mean mu = {0} must be >= 0")]
    NegativeMean(f64),
    #[error("geometric ratio z = {0} must lie in (0, 1)")]
    RatioOutOfRange(f64),
}

/// Aggregated mean and excess factor for one bounded event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffParams {
    pub mu: f64,
    pub delta: f64,
}

impl ChernoffParams {
    pub fn new(mu: f64, delta: f64) -> Result<Self, ChernoffError> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(ChernoffError::NegativeMean(mu));
        }
        if delta < 0.0 || !delta.is_finite() {
            return Err(ChernoffError::NonPositiveDelta(delta));
        }
        Ok(Self { mu, delta })
    }
}

/// Tight form: `(e^delta / (1 + delta)^(1 + delta))^mu`, computed as
/// `exp(mu * (delta - (1 + delta) * ln(1 + delta)))`.
///
/// `delta == 0` yields the trivial bound 1 (reachable through limiting
/// configurations); negative `delta` is rejected.
pub fn chernoff_tight(p: ChernoffParams) -> Result<f64, ChernoffError> {
    if p.delta < 0.0 {
        return Err(ChernoffError::NonPositiveDelta(p.delta));
    }
    if !(p.mu >= 0.0) {
        return Err(ChernoffError::NegativeMean(p.mu));
    }
    Ok((p.mu * (p.delta - (1.0 + p.delta) * p.delta.ln_1p())).exp())
}

/// Loose form: `exp(-min(delta^2, delta) * mu / 3)`.
pub fn chernoff_loose(p: ChernoffParams) -> Result<f64, ChernoffError> {
    if p.delta < 0.0 {
        return Err(ChernoffError::NonPositiveDelta(p.delta));
    }
    if !(p.mu >= 0.0) {
        return Err(ChernoffError::NegativeMean(p.mu));
    }
    Ok((-p.delta.min(p.delta * p.delta) * p.mu / 3.0).exp())
}

/// `sum_{i=a}^{inf} z^i = z^a / (1 - z)` for `0 < z < 1`; `a` may be any
/// non-negative real, matching the real-valued case boundaries it serves.
pub fn geom_sum(z: f64, a: f64) -> Result<f64, ChernoffError> {
    check_ratio(z)?;
    Ok(z.powf(a) / (1.0 - z))
}

/// `sum_{i=a}^{inf} i * z^i = z^a * (a - (a - 1) * z) / (1 - z)^2`.
pub fn geom_weighted_sum(z: f64, a: f64) -> Result<f64, ChernoffError> {
    check_ratio(z)?;
    let one_minus = 1.0 - z;
    Ok(z.powf(a) * (a - (a - 1.0) * z) / (one_minus * one_minus))
}

fn check_ratio(z: f64) -> Result<(), ChernoffError> {
    if !(z > 0.0 && z < 1.0) {
        return Err(ChernoffError::RatioOutOfRange(z));
    }
    Ok(())
}

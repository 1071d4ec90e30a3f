//! Output-queue bound. A packet pinned in the output queue since `s - d`
//! was late at one of the two mesh stages, and the `(sigma, 1 - epsilon)`
//! output envelope caps how many window starts can contribute at all:
//! at most `(d - q + sigma_k) / epsilon` of them. The published display
//! multiplies the two stage-delay factors:
//!
//! ```text
//! sum_d  n m f(d alpha / 2m) * m g(d beta / 2m) * (d - q + sigma_k) / epsilon
//! ```
//!
//! implemented verbatim with a `max(0, .)` guard on the window count.

use super::sum::truncated_sum;
use super::{input, Bound, BoundsError, CanonicalParams, EvalPolicy, MiddleEvaluator};

pub(crate) fn check_output_params(epsilon: f64, sigma_k: f64) -> Result<(), BoundsError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(BoundsError::InvalidParams(format!(
            "epsilon = {epsilon} must lie in (0, 1]"
        )));
    }
    if !(sigma_k >= 0.0) || !sigma_k.is_finite() {
        return Err(BoundsError::InvalidParams(format!("sigma_k = {sigma_k} must be >= 0")));
    }
    Ok(())
}

pub(crate) fn queue_tail(
    q: f64,
    p: &CanonicalParams,
    epsilon: f64,
    sigma_k: f64,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    let middle = MiddleEvaluator::new(p, policy)?;
    let n = p.n as f64;
    let m = p.m_eff;
    let mut capped = false;
    let mut error = None;
    let outer = truncated_sum(policy, |d| {
        let d = d as f64;
        let windows = d - q + sigma_k;
        if windows <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let f = match input::queue_tail(d * p.alpha_eff / (2.0 * m), p, policy) {
            Ok(b) => b,
            Err(e) => {
                error.get_or_insert(e);
                return f64::NEG_INFINITY;
            }
        };
        let g = match middle.queue_tail(d * p.beta_eff / (2.0 * m)) {
            Ok(b) => b,
            Err(e) => {
                error.get_or_insert(e);
                return f64::NEG_INFINITY;
            }
        };
        capped |= f.truncation_capped || g.truncation_capped;
        (n * m * f.value * m * g.value * windows / epsilon).ln()
    });
    if let Some(e) = error {
        return Err(e);
    }
    Ok(Bound::new(outer.sum, outer.capped || capped))
}

//! Input-stage queue bound: the tail of one `ij` buffer fed by a rate-1
//! input spreading packets uniformly over `m` middle nodes, drained at
//! `alpha / m` per slot.
//!
//! For the queue to reach `q` at time `t` with last-empty time `s`, the
//! window `w = t - s` must deliver at least `alpha w / m + q` packets to the
//! link, an event with aggregated mean `(w + sigma) / m`. The union bound
//! sums over all window lengths. With `alpha >= 2` the loose form collapses
//! to the single geometric `e^{-q/3} / (1 - e^{-(alpha-1)/(3m)})`; with
//! `1 < alpha < 2` a second, slower geometric term takes over past the point
//! where the excess factor drops below 1.

use super::sum::{ln_union_term, truncated_sum};
use super::{Bound, BoundsError, CanonicalParams, EvalPath, EvalPolicy};

pub(crate) fn queue_tail(
    q: f64,
    p: &CanonicalParams,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    match policy.path {
        EvalPath::ClosedForm => Ok(Bound::new(closed(q, p), false)),
        EvalPath::Numeric => Ok(numeric(q, p, policy)),
    }
}

/// The two-term geometric kernel of the input-delay factor: the probability
/// that a given link's delay reaches `d` is at most
/// `sum_l coef_l * exp(-rate_l * d)`. One component when `alpha_eff >= 2`,
/// two below (the closed forms substitute this kernel wherever the
/// input-delay factor appears).
pub(crate) fn delay_kernel(p: &CanonicalParams) -> Vec<(f64, f64)> {
    let m = p.m_eff;
    let a = p.alpha_eff;
    // 1 / (1 - e^{-x}) computed as -1 / expm1(-x).
    let geom_coef = |x: f64| -1.0 / (-x).exp_m1();
    let mut components = vec![(geom_coef((a - 1.0) / (3.0 * m)), a / (3.0 * m))];
    if a < 2.0 {
        let am1 = a - 1.0;
        components.push((
            geom_coef(am1 * am1 / (3.0 * m)),
            a * am1 * am1 / (3.0 * m * (2.0 - a)),
        ));
    }
    components
}

fn closed(q: f64, p: &CanonicalParams) -> f64 {
    // Each kernel component (coef, rate) contributes coef * exp(-rate * (q m / alpha)):
    // at queue threshold q the per-window exponents evaluate to q/3 and
    // q (alpha-1)^2 / (3 (2-alpha)) respectively.
    let m = p.m_eff;
    let a = p.alpha_eff;
    delay_kernel(p)
        .iter()
        .map(|(coef, rate)| coef * (-rate * q * m / a).exp())
        .sum()
}

fn numeric(q: f64, p: &CanonicalParams, policy: &EvalPolicy) -> Bound {
    let m = p.m_eff;
    let a = p.alpha_eff;
    let sigma = p.sigma;
    let out = truncated_sum(policy, |w| {
        let w = w as f64;
        ln_union_term(policy.form, (w + sigma) / m, a * w / m + q)
    });
    Bound::new(out.sum, out.capped)
}

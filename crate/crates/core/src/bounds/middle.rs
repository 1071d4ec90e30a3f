//! Middle-stage queue bound: the tail of one `jk` buffer at a middle node.
//!
//! Arrivals to link `jk` over a window are packets that reached the middle
//! stage after possibly waiting at the input, so each union-bound term pairs
//! an arrival tail over the widened window `[s - d, t)` with the probability
//! that some input-stage delay reached `d`:
//!
//! ```text
//! sum_d sum_w  Pr[arrivals over w + d >= beta w / m + q] * Pr[some D1 >= d]
//! ```
//!
//! The numeric path evaluates exactly that double sum with the selected
//! Chernoff form per term. The closed-form path (loose form, beta_eff <= 2)
//! sums the six published geometric majorizations of the same double sum,
//! split by how the excess factor compares to 1 and to `beta - 1`; for
//! `beta_eff > 2` no closed form was published and the numeric path is the
//! only one. When `alpha_eff < 2` the input-delay factor inside every term
//! gains its second, slower geometric component.

use std::sync::Mutex;

use super::input;
use super::sum::{ln_union_term, truncated_sum};
use super::{Bound, BoundsError, CanonicalParams, EvalPath, EvalPolicy};
use crate::chernoff::geom_weighted_sum;

/// Middle-stage bound evaluator. On the numeric path the input-delay factor
/// at each lag `d` is independent of the queue threshold, so it is computed
/// once and shared across every point of a curve (concurrent lookups settle
/// on the same value, keeping results order-independent).
pub struct MiddleEvaluator<'a> {
    p: &'a CanonicalParams,
    policy: &'a EvalPolicy,
    factor_cache: Mutex<Vec<Option<(f64, bool)>>>,
}

impl<'a> MiddleEvaluator<'a> {
    pub fn new(p: &'a CanonicalParams, policy: &'a EvalPolicy) -> Result<Self, BoundsError> {
        if policy.path == EvalPath::ClosedForm && p.beta_eff > 2.0 {
            return Err(BoundsError::UnsupportedClosedForm(format!(
                "no closed middle-stage form for beta_eff = {} > 2; use the numeric path",
                p.beta_eff
            )));
        }
        Ok(Self { p, policy, factor_cache: Mutex::new(Vec::new()) })
    }

    /// Pr[middle-stage queue >= q] under this evaluator's policy.
    pub fn queue_tail(&self, q: f64) -> Result<Bound, BoundsError> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(BoundsError::InvalidParams(format!("threshold {q} must be >= 0")));
        }
        match self.policy.path {
            EvalPath::ClosedForm => Ok(Bound::new(closed(q, self.p), false)),
            EvalPath::Numeric => Ok(self.numeric(q)),
        }
    }

    fn numeric(&self, q: f64) -> Bound {
        let p = self.p;
        let m = p.m_eff;
        let beta = p.beta_eff;
        let sigma = p.sigma;
        let mut capped = false;
        let outer = truncated_sum(self.policy, |d| {
            let (factor, factor_capped) = self.input_delay_factor(d);
            let dd = d as f64;
            let inner = truncated_sum(self.policy, |w| {
                let w = w as f64;
                ln_union_term(self.policy.form, (w + dd + sigma) / m, beta * w / m + q)
            });
            capped |= factor_capped || inner.capped;
            (factor * inner.sum).ln()
        });
        Bound::new(outer.sum, outer.capped || capped)
    }

    /// `Pr[some input's D1 >= d] <= n * (input queue tail at d alpha / m)`,
    /// evaluated on the same policy as the middle sum.
    fn input_delay_factor(&self, d: u64) -> (f64, bool) {
        let idx = d as usize;
        {
            let cache = self.factor_cache.lock().unwrap();
            if let Some(Some(v)) = cache.get(idx) {
                return *v;
            }
        }
        let q_at_d = d as f64 * self.p.alpha_eff / self.p.m_eff;
        let bound = input::queue_tail(q_at_d, self.p, self.policy)
            .expect("input tail cannot fail on validated params");
        let value = (self.p.n as f64 * bound.value, bound.truncation_capped);
        let mut cache = self.factor_cache.lock().unwrap();
        if cache.len() <= idx {
            cache.resize(idx + 1, None);
        }
        cache[idx] = Some(value);
        value
    }
}

/// `1 / (1 - e^{-x})`, the value of an infinite geometric sum with log-ratio
/// `-x`; divergent (infinite) when `x <= 0`.
fn geom(x: f64) -> f64 {
    if x > 0.0 {
        -1.0 / (-x).exp_m1()
    } else {
        f64::INFINITY
    }
}

/// The six published closed-form terms, summed over the input-delay kernel
/// components. Valid for `1 < beta_eff <= 2` with the loose form.
fn closed(q: f64, p: &CanonicalParams) -> f64 {
    let m = p.m_eff;
    let n = p.n as f64;
    let b = p.beta_eff;
    let bm1 = b - 1.0;
    let bm1_sq = bm1 * bm1;

    let mut total = 0.0;
    for (coef, rho) in input::delay_kernel(p) {
        let lead = n * coef;
        // 1a: lags up to qm/2, excess factor >= 1 throughout.
        total += lead * (-q / 3.0).exp() * geom(bm1 / (3.0 * m)) * geom(rho - 1.0 / (3.0 * m));
        // 1b: same lags past the case boundary, excess in [beta-1, 1].
        let mid_geom = geom(bm1_sq / (3.0 * m)) * geom(rho - bm1_sq / (3.0 * m));
        total += lead * (-bm1_sq * q / 3.0).exp() * mid_geom;
        // 2: lags in [qm/2, qm/beta].
        total += lead * (-(q * m / 2.0) * rho).exp() * (-bm1_sq * q / 3.0).exp() * mid_geom;
        // 3a: lags in [qm/beta, 2qm/(beta+1)], excess in [(beta-1)/2, beta-1].
        total += lead
            * (-(q * m / b) * rho).exp()
            * (-bm1_sq * q / (12.0 * b)).exp()
            * geom(bm1_sq / (12.0 * m))
            * geom(rho + bm1_sq / (12.0 * m));
        // 3b: larger lags, windows past the case boundary.
        total += lead
            * (-(2.0 * q * m / (b + 1.0)) * rho).exp()
            * (-bm1_sq * q / 6.0).exp()
            * geom(bm1_sq / (12.0 * m))
            * geom(rho + b * bm1 / (6.0 * m));
        // 3c: short windows bounded trivially by 1, counted per lag.
        let start = 2.0 * q * m / (b + 1.0);
        let weighted = geom_weighted_sum((-rho).exp(), start)
            .expect("0 < e^{-rho} < 1 for rho > 0");
        total += lead * (b + 1.0) / bm1 * weighted;
    }
    total
}

/// The dependence-corrected middle-stage bound: each term conditions one
/// flow's arrivals against the threshold `5 w beta / (m n)` and splits into
/// (a) that single flow exceeding the threshold and (b) the remaining flows
/// carrying the rest while the tagged input is delayed.
///
/// Evaluated literally, the display saturates: every window of length zero
/// has threshold 0, so term (a) is the trivial bound 1 there (and again for
/// every lag `d > (5 beta - 1) w`, so the lag sum does not converge).
/// Summation therefore stops as soon as the partial sum reaches 1 — once
/// there, no further non-negative term can change the clamped result.
pub(crate) fn corrected_queue_tail(
    q: f64,
    p: &CanonicalParams,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    if policy.path == EvalPath::ClosedForm {
        return Err(BoundsError::UnsupportedClosedForm(
            "the dependence-corrected bound has no closed form; use the numeric path".into(),
        ));
    }
    let m = p.m_eff;
    let n = p.n as f64;
    let b = p.beta_eff;
    let mut total = 0.0_f64;
    let mut capped = false;
    for d in 0..policy.max_terms {
        let q_at_d = d as f64 * p.alpha_eff / m;
        let delay_factor = input::queue_tail(q_at_d, p, policy)?;
        capped |= delay_factor.truncation_capped;
        let dd = d as f64;
        let mut inner_prev = f64::INFINITY;
        for w in 0..policy.max_terms {
            let w = w as f64;
            let len = w + dd;
            let tagged_threshold = 5.0 * w * b / (m * n);
            let term_a = ln_union_term(policy.form, len / (m * n), tagged_threshold).exp();
            let rest_threshold = b * w / m + q - tagged_threshold;
            let term_b = ln_union_term(policy.form, (n - 1.0) * len / (m * n), rest_threshold)
                .exp()
                * delay_factor.value;
            let term = n * (term_a + term_b);
            total += term;
            if total >= 1.0 {
                return Ok(Bound::new(total, capped));
            }
            if term < inner_prev && term <= policy.tolerance * total {
                break;
            }
            inner_prev = term;
        }
    }
    Ok(Bound::new(total, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{ChernoffForm, EvalPolicy};

    fn params(n: usize, m: f64, speedup: f64) -> CanonicalParams {
        CanonicalParams::new(m, speedup, speedup, n, 0.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_rejected_above_beta_two() {
        let p = params(20, 80.0, 3.0);
        assert!(matches!(
            MiddleEvaluator::new(&p, &EvalPolicy::closed_form()),
            Err(BoundsError::UnsupportedClosedForm(_))
        ));
        assert!(MiddleEvaluator::new(&p, &EvalPolicy::numeric(ChernoffForm::Tight)).is_ok());
    }

    #[test]
    fn zero_threshold_clamps_to_one() {
        let p = params(20, 80.0, 2.0);
        for policy in [EvalPolicy::closed_form(), EvalPolicy::numeric(ChernoffForm::Loose)] {
            let eval = MiddleEvaluator::new(&p, &policy).unwrap();
            let b = eval.queue_tail(0.0).unwrap();
            assert!(b.value >= 1.0);
            assert_eq!(b.probability(), 1.0);
        }
    }

    #[test]
    fn closed_form_majorizes_numeric_loose() {
        let p = params(20, 80.0, 2.0);
        let closed_policy = EvalPolicy::closed_form();
        let numeric_policy = EvalPolicy::numeric(ChernoffForm::Loose);
        let closed = MiddleEvaluator::new(&p, &closed_policy).unwrap();
        let numeric = MiddleEvaluator::new(&p, &numeric_policy).unwrap();
        for q in [20.0, 40.0, 80.0] {
            let c = closed.queue_tail(q).unwrap().value;
            let s = numeric.queue_tail(q).unwrap().value;
            assert!(c >= s, "closed {c} < numeric {s} at q={q}");
        }
    }

    #[test]
    fn tight_numeric_at_or_below_loose_numeric() {
        let p = params(20, 80.0, 2.0);
        let tight_policy = EvalPolicy::numeric(ChernoffForm::Tight);
        let loose_policy = EvalPolicy::numeric(ChernoffForm::Loose);
        let tight = MiddleEvaluator::new(&p, &tight_policy).unwrap();
        let loose = MiddleEvaluator::new(&p, &loose_policy).unwrap();
        for q in [20.0, 50.0] {
            let t = tight.queue_tail(q).unwrap().value;
            let l = loose.queue_tail(q).unwrap().value;
            assert!(t <= l * (1.0 + 1e-12), "tight {t} > loose {l} at q={q}");
        }
    }

    #[test]
    fn corrected_bound_saturates_at_trivial() {
        // Zero-length windows have threshold 0, so the very first term is
        // already n >= 1: the literal display cannot beat the trivial bound.
        let p = params(20, 80.0, 2.0);
        let policy = EvalPolicy::numeric(ChernoffForm::Tight);
        let b = corrected_queue_tail(40.0, &p, &policy).unwrap();
        assert!(b.value >= 1.0);
        assert_eq!(b.probability(), 1.0);
        assert!(corrected_queue_tail(40.0, &p, &EvalPolicy::closed_form()).is_err());
    }
}

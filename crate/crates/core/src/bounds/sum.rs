//! Truncated union-bound summation: per-window Chernoff terms and the
//! stopping rule shared by every numeric path.

use super::{ChernoffForm, EvalPolicy};

/// One union-bound term: the probability that independent binary arrivals
/// with aggregated mean `mu` reach `threshold`.
///
/// A threshold at or below the mean has excess factor `delta <= 0`, where the
/// Chernoff bound does not apply; the term is the trivial bound 1. A window
/// with zero mean cannot produce arrivals, so the tight form is 0 there; the
/// loose form keeps its limiting value `exp(-threshold / 3)`.
///
/// Returns the natural log of the term; the caller exponentiates. Working on
/// logs lets the truncation logic see rising/falling structure even where the
/// terms themselves underflow to zero.
pub(crate) fn ln_union_term(form: ChernoffForm, mu: f64, threshold: f64) -> f64 {
    if !(threshold > mu) {
        return 0.0;
    }
    if mu == 0.0 {
        return match form {
            ChernoffForm::Tight => f64::NEG_INFINITY,
            ChernoffForm::Loose => -threshold / 3.0,
        };
    }
    // excess = delta * mu, so delta >= 1 exactly when excess >= mu.
    let excess = threshold - mu;
    match form {
        ChernoffForm::Tight => excess - threshold * (threshold / mu).ln(),
        ChernoffForm::Loose => -excess.min(excess * excess / mu) / 3.0,
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SumOutcome {
    pub sum: f64,
    pub capped: bool,
}

/// Sums `exp(ln_term(k))` for `k = 0, 1, 2, ...` until the series has
/// provably converged at the policy tolerance.
///
/// The terms of every series here rise to a single peak (possibly a plateau
/// of trivial 1-terms) and then decay at an asymptotically geometric rate.
/// The sum stops once the terms are strictly decaying, below 1, and both the
/// current term and a geometric tail estimate (ratio taken from the last two
/// terms) fall below `tolerance` relative to the partial sum. The hard cap
/// flags the outcome instead of looping forever.
pub(crate) fn truncated_sum(policy: &EvalPolicy, mut ln_term: impl FnMut(u64) -> f64) -> SumOutcome {
    let mut sum = 0.0_f64;
    let mut ln_prev = f64::INFINITY;
    for k in 0..policy.max_terms {
        let ln_t = ln_term(k);
        let value = ln_t.exp();
        sum += value;
        if k > 0 && ln_t < ln_prev && value < 1.0 {
            let floor = policy.tolerance * sum;
            if value <= floor {
                let ratio = (ln_t - ln_prev).exp();
                let tail_estimate = if ratio < 1.0 { value * ratio / (1.0 - ratio) } else { f64::INFINITY };
                if tail_estimate <= floor {
                    return SumOutcome { sum, capped: false };
                }
            }
        }
        ln_prev = ln_t;
    }
    SumOutcome { sum, capped: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{EvalPath, EvalPolicy};

    fn policy() -> EvalPolicy {
        EvalPolicy::new(ChernoffForm::Loose, EvalPath::Numeric, 1e-12, 10_000_000).unwrap()
    }

    #[test]
    fn geometric_series_is_summed_to_tolerance() {
        let r: f64 = 0.9;
        let out = truncated_sum(&policy(), |k| (k as f64) * r.ln() + (0.5f64).ln());
        assert!(!out.capped);
        assert!((out.sum - 0.5 / (1.0 - r)).abs() < 1e-9 * out.sum);
    }

    #[test]
    fn rising_then_falling_survives_leading_underflow() {
        // Terms exp(-(k - 600)^2 / 50) underflow to 0.0 for small k; the
        // engine must not stop before the peak.
        let out = truncated_sum(&policy(), |k| {
            let x = k as f64 - 600.0;
            -x * x / 50.0
        });
        assert!(!out.capped);
        let direct: f64 = (0..1200).map(|k| (-((k as f64 - 600.0).powi(2)) / 50.0).exp()).sum();
        assert!((out.sum - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn plateau_of_trivial_terms_does_not_stop_early() {
        // 1000 trivial terms followed by geometric decay.
        let out = truncated_sum(&policy(), |k| {
            if k < 1000 {
                0.0
            } else {
                -0.05 * (k - 1000) as f64 - 0.01
            }
        });
        assert!(!out.capped);
        let expected = 1000.0 + (-0.01f64).exp() / (1.0 - (-0.05f64).exp());
        assert!((out.sum - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn cap_is_reported() {
        let tight_cap = EvalPolicy::new(ChernoffForm::Loose, EvalPath::Numeric, 1e-12, 100).unwrap();
        let out = truncated_sum(&tight_cap, |_| 0.0);
        assert!(out.capped);
        assert_eq!(out.sum, 100.0);
    }

    #[test]
    fn union_term_trivial_and_zero_mean_cases() {
        assert_eq!(ln_union_term(ChernoffForm::Loose, 5.0, 4.0), 0.0);
        assert_eq!(ln_union_term(ChernoffForm::Loose, 5.0, 5.0), 0.0);
        assert_eq!(ln_union_term(ChernoffForm::Tight, 0.0, 3.0), f64::NEG_INFINITY);
        let loose = ln_union_term(ChernoffForm::Loose, 0.0, 3.0);
        assert!((loose - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn union_term_matches_chernoff_forms() {
        use crate::chernoff::{chernoff_loose, chernoff_tight, ChernoffParams};
        for &(mu, threshold) in &[(2.0, 5.0), (0.5, 0.75), (10.0, 11.0), (1.0, 40.0)] {
            let delta = threshold / mu - 1.0;
            let p = ChernoffParams::new(mu, delta).unwrap();
            let t = ln_union_term(ChernoffForm::Tight, mu, threshold).exp();
            let l = ln_union_term(ChernoffForm::Loose, mu, threshold).exp();
            assert!((t - chernoff_tight(p).unwrap()).abs() < 1e-12 * t.max(1e-300));
            assert!((l - chernoff_loose(p).unwrap()).abs() < 1e-12 * l.max(1e-300));
            assert!(t <= l * (1.0 + 1e-12));
        }
    }
}

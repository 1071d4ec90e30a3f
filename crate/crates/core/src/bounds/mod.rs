//! Tail-probability upper bounds for every stage of the router.
//!
//! All formulas are stated for the canonical system: maximum load 1 and every
//! middle node active. [`canonicalize`] maps an arbitrary configuration onto
//! that system by rescaling time by the maximum load `r_bar` and absorbing
//! the inactive nodes into the effective speedups
//! `alpha_eff = alpha * m' / (m * r_bar)` (likewise `beta_eff`). Queue
//! thresholds are packet counts and pass through unchanged; delay thresholds
//! are given in original slots and are rescaled internally.
//!
//! Each bound has two evaluation paths:
//!
//! - **closed form** — the published geometric majorizations, valid for the
//!   loose Chernoff form only, and for the middle stage only when
//!   `beta_eff <= 2`;
//! - **numeric** — direct truncated summation of the union bound with either
//!   Chernoff form. This is the only path for `beta_eff > 2`.
//!
//! Returned [`Bound`] values are *raw*: sums of bounds can legitimately
//! exceed 1 and are clamped to `[0, 1]` only when a [`TailCurve`] is
//! assembled.

mod input;
mod middle;
mod output;
mod sum;

use rayon::prelude::*;
use thiserror::Error;

use crate::chernoff::ChernoffError;
use crate::model::RouterConfig;

pub use middle::MiddleEvaluator;

/// Which Chernoff form drives the union-bound terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChernoffForm {
    /// `(e^delta / (1+delta)^(1+delta))^mu` — tighter, used for numerics.
    Tight,
    /// `exp(-min(delta^2, delta) mu / 3)` — looser, behind the closed forms.
    Loose,
}

/// Closed-form algebra or direct truncated summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPath {
    ClosedForm,
    Numeric,
}

/// Which reading of the scaling transform supplies the effective middle-stage
/// size. The theorem's subscripts use the active count `m'`; the transform
/// display sets it to `m`, which appears to be a typo. The theorem reading is
/// the default; the display reading is kept selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingReading {
    #[default]
    Theorem,
    Display,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("no traffic: maximum load is 0, nothing to bound")]
    NoTraffic,
    #[error("overload: effective speedups ({alpha_eff}, {beta_eff}) must both exceed 1; no finite bound exists")]
    Overload { alpha_eff: f64, beta_eff: f64 },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("closed form unavailable: {0}")]
    UnsupportedClosedForm(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Chernoff(#[from] ChernoffError),
}

/// Parameters of the canonical (load-1, all-active) system.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalParams {
    m_eff: f64,
    alpha_eff: f64,
    beta_eff: f64,
    n: usize,
    sigma: f64,
    time_scale: f64,
}

impl CanonicalParams {
    /// Builds canonical parameters directly. Both effective speedups must
    /// exceed 1; anything else has no finite bound and is rejected here once
    /// rather than in every operation.
    pub fn new(
        m_eff: f64,
        alpha_eff: f64,
        beta_eff: f64,
        n: usize,
        sigma: f64,
        time_scale: f64,
    ) -> Result<Self, BoundsError> {
        if !(m_eff >= 1.0) || !m_eff.is_finite() {
            return Err(BoundsError::InvalidParams(format!("m_eff = {m_eff} must be >= 1")));
        }
        if n == 0 {
            return Err(BoundsError::InvalidParams("n must be >= 1".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(BoundsError::InvalidParams(format!("sigma = {sigma} must be >= 0")));
        }
        if !(time_scale > 0.0) || !time_scale.is_finite() {
            return Err(BoundsError::InvalidParams(format!(
                "time_scale = {time_scale} must be > 0"
            )));
        }
        if !(alpha_eff > 1.0) || !(beta_eff > 1.0) {
            return Err(BoundsError::Overload { alpha_eff, beta_eff });
        }
        Ok(Self { m_eff, alpha_eff, beta_eff, n, sigma, time_scale })
    }

    /// Attaches an aggregate burst term (packets). Bursts only influence the
    /// numeric paths; the closed forms are published burst-free.
    pub fn with_sigma(mut self, sigma: f64) -> Result<Self, BoundsError> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(BoundsError::InvalidParams(format!("sigma = {sigma} must be >= 0")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn m_eff(&self) -> f64 {
        self.m_eff
    }
    pub fn alpha_eff(&self) -> f64 {
        self.alpha_eff
    }
    pub fn beta_eff(&self) -> f64 {
        self.beta_eff
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }
}

/// Maps a configuration with maximum load `r_bar` onto the canonical system,
/// using the theorem reading of the transform (`m_eff = m'`).
pub fn canonicalize(cfg: &RouterConfig, r_bar: f64) -> Result<CanonicalParams, BoundsError> {
    canonicalize_with(cfg, r_bar, ScalingReading::Theorem)
}

/// [`canonicalize`] with an explicit choice of scaling reading.
pub fn canonicalize_with(
    cfg: &RouterConfig,
    r_bar: f64,
    reading: ScalingReading,
) -> Result<CanonicalParams, BoundsError> {
    if !r_bar.is_finite() || r_bar < 0.0 {
        return Err(BoundsError::InvalidParams(format!("r_bar = {r_bar} must be finite and >= 0")));
    }
    if r_bar == 0.0 {
        return Err(BoundsError::NoTraffic);
    }
    let scale = cfg.m_active as f64 / (cfg.m as f64 * r_bar);
    let alpha_eff = cfg.alpha * scale;
    let beta_eff = cfg.beta * scale;
    let m_eff = match reading {
        ScalingReading::Theorem => cfg.m_active as f64,
        ScalingReading::Display => cfg.m as f64,
    };
    CanonicalParams::new(m_eff, alpha_eff, beta_eff, cfg.n, 0.0, r_bar)
}

/// Evaluation policy: Chernoff form, path, and truncation control.
///
/// `tolerance` is relative to the running partial sum, so deep tails keep
/// full relative precision. The closed-form path is derived from the loose
/// form only; pairing it with the tight form is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicy {
    pub form: ChernoffForm,
    pub path: EvalPath,
    pub tolerance: f64,
    pub max_terms: u64,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_TERMS: u64 = 10_000_000;

impl EvalPolicy {
    pub fn new(
        form: ChernoffForm,
        path: EvalPath,
        tolerance: f64,
        max_terms: u64,
    ) -> Result<Self, BoundsError> {
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(BoundsError::InvalidPolicy(format!("tolerance {tolerance} must be > 0")));
        }
        if max_terms == 0 {
            return Err(BoundsError::InvalidPolicy("max_terms must be > 0".into()));
        }
        if path == EvalPath::ClosedForm && form == ChernoffForm::Tight {
            return Err(BoundsError::InvalidPolicy(
                "the closed forms are derived from the loose Chernoff form; \
                 use the numeric path for the tight form"
                    .into(),
            ));
        }
        Ok(Self { form, path, tolerance, max_terms })
    }

    /// Numeric path with the given form and default truncation.
    pub fn numeric(form: ChernoffForm) -> Self {
        Self { form, path: EvalPath::Numeric, tolerance: DEFAULT_TOLERANCE, max_terms: DEFAULT_MAX_TERMS }
    }

    /// Closed-form path (loose form by construction).
    pub fn closed_form() -> Self {
        Self {
            form: ChernoffForm::Loose,
            path: EvalPath::ClosedForm,
            tolerance: DEFAULT_TOLERANCE,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

/// A raw tail-probability upper bound. `value` may exceed 1 (sums of bounds
/// need the unclamped value); `truncation_capped` reports that some numeric
/// sum hit its term cap, so the value undercounts the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub truncation_capped: bool,
}

impl Bound {
    pub(crate) fn new(value: f64, truncation_capped: bool) -> Self {
        Self { value, truncation_capped }
    }

    /// The reported probability: clamped into `[0, 1]`.
    pub fn probability(&self) -> f64 {
        self.value.clamp(0.0, 1.0)
    }
}

/// Whether a delay bound covers one fixed link or unions over all inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayScope {
    /// The delay seen on one given mesh link (per-packet view).
    SingleLink,
    /// Union bound over all `n` inputs feeding a middle node.
    AnyInput,
}

/// Pr[input-stage queue >= q] for one `ij` link.
pub fn input_queue_tail(q: f64, p: &CanonicalParams, policy: &EvalPolicy) -> Result<Bound, BoundsError> {
    check_threshold(q)?;
    input::queue_tail(q, p, policy)
}

/// Pr[input-stage delay >= d slots]; `d` is in original (unscaled) slots.
pub fn input_delay_tail(
    d: f64,
    p: &CanonicalParams,
    policy: &EvalPolicy,
    scope: DelayScope,
) -> Result<Bound, BoundsError> {
    check_threshold(d)?;
    let q = p.time_scale * d * p.alpha_eff / p.m_eff;
    let bound = input::queue_tail(q, p, policy)?;
    Ok(match scope {
        DelayScope::SingleLink => bound,
        DelayScope::AnyInput => Bound::new(bound.value * p.n as f64, bound.truncation_capped),
    })
}

/// Pr[middle-stage queue >= q] for one `jk` link.
pub fn middle_queue_tail(q: f64, p: &CanonicalParams, policy: &EvalPolicy) -> Result<Bound, BoundsError> {
    check_threshold(q)?;
    MiddleEvaluator::new(p, policy)?.queue_tail(q)
}

/// Pr[middle-stage delay >= d slots]; `d` is in original slots.
pub fn middle_delay_tail(d: f64, p: &CanonicalParams, policy: &EvalPolicy) -> Result<Bound, BoundsError> {
    check_threshold(d)?;
    let q = p.time_scale * d * p.beta_eff / p.m_eff;
    middle_queue_tail(q, p, policy)
}

/// Pr[end-to-end delay >= d slots]: a packet delayed by `d` is either still
/// at the input stage at `t - d/2` or spends `d/2` at the middle stage, so
/// the two queue bounds compose additively at thresholds `d alpha / (2 m)`
/// and `d beta / (2 m)` (original-system rates).
pub fn end_to_end_delay_tail(
    d: f64,
    p: &CanonicalParams,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    check_threshold(d)?;
    let scaled = p.time_scale * d / (2.0 * p.m_eff);
    let f = input::queue_tail(scaled * p.alpha_eff, p, policy)?;
    let g = MiddleEvaluator::new(p, policy)?.queue_tail(scaled * p.beta_eff)?;
    Ok(Bound::new(f.value + g.value, f.truncation_capped || g.truncation_capped))
}

/// The dependence-corrected middle-stage queue bound. Numeric path only.
pub fn middle_queue_tail_corrected(
    q: f64,
    p: &CanonicalParams,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    check_threshold(q)?;
    middle::corrected_queue_tail(q, p, policy)
}

/// Pr[output queue >= q packets]. `epsilon` is the output underload margin
/// and `sigma_k` the output burst term. Thresholds are canonical here; the
/// output link is outside the scaling transform.
pub fn output_queue_tail(
    q: f64,
    p: &CanonicalParams,
    epsilon: f64,
    sigma_k: f64,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    check_threshold(q)?;
    output::check_output_params(epsilon, sigma_k)?;
    output::queue_tail(q, p, epsilon, sigma_k, policy)
}

/// Pr[output-link delay >= d slots]: the queue at `t - d` must hold at least
/// `d (1 - epsilon)` packets.
pub fn output_delay_tail(
    d: f64,
    p: &CanonicalParams,
    epsilon: f64,
    sigma_k: f64,
    policy: &EvalPolicy,
) -> Result<Bound, BoundsError> {
    check_threshold(d)?;
    output::check_output_params(epsilon, sigma_k)?;
    output::queue_tail(d * (1.0 - epsilon), p, epsilon, sigma_k, policy)
}

fn check_threshold(x: f64) -> Result<(), BoundsError> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(BoundsError::InvalidParams(format!("threshold {x} must be finite and >= 0")));
    }
    Ok(())
}

/// Which tail distribution a curve describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    InputQueue,
    InputDelay,
    MiddleQueue,
    MiddleDelay,
    EndToEndDelay,
    OutputQueue { epsilon: f64, sigma_k: f64 },
    OutputDelay { epsilon: f64, sigma_k: f64 },
    MiddleQueueCorrected,
}

impl CurveKind {
    /// Stable identifier used in tabular output.
    pub fn id(&self) -> &'static str {
        match self {
            Self::InputQueue => "input_q",
            Self::InputDelay => "input_d",
            Self::MiddleQueue => "middle_q",
            Self::MiddleDelay => "middle_d",
            Self::EndToEndDelay => "e2e_d",
            Self::OutputQueue { .. } => "output_q",
            Self::OutputDelay { .. } => "output_d",
            Self::MiddleQueueCorrected => "middle_q_corrected",
        }
    }
}

/// One point of a tail curve. `probability` is clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub probability: f64,
    pub truncation_capped: bool,
}

/// A monotone tail curve: thresholds strictly increasing, probabilities
/// non-increasing, all within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    points: Vec<CurvePoint>,
}

impl TailCurve {
    /// Assembles a curve from raw bound values. This is the single clamping
    /// point: values are clamped to `[0, 1]` and then made non-increasing by
    /// taking the running minimum (a bound at a lower threshold is also a
    /// bound at any higher one, so the minimum stays a valid upper bound).
    pub(crate) fn assemble(thresholds: &[f64], raw: Vec<Bound>) -> Self {
        let mut points = Vec::with_capacity(raw.len());
        let mut running = 1.0_f64;
        for (&threshold, bound) in thresholds.iter().zip(raw) {
            running = running.min(bound.probability());
            points.push(CurvePoint {
                threshold,
                probability: running,
                truncation_capped: bound.truncation_capped,
            });
        }
        Self { points }
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Probability at the given threshold, if present.
    pub fn probability_at(&self, threshold: f64) -> Option<f64> {
        self.points.iter().find(|p| p.threshold == threshold).map(|p| p.probability)
    }
}

/// Batch evaluation of one bound over a strictly increasing threshold grid.
/// Points are computed independently (in parallel) and assembled in order,
/// so the result does not depend on scheduling.
pub fn tail_curve(
    kind: CurveKind,
    thresholds: &[f64],
    p: &CanonicalParams,
    policy: &EvalPolicy,
) -> Result<TailCurve, BoundsError> {
    if thresholds.is_empty() {
        return Ok(TailCurve { points: Vec::new() });
    }
    for w in thresholds.windows(2) {
        if !(w[1] > w[0]) {
            return Err(BoundsError::InvalidParams(format!(
                "thresholds must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    check_threshold(thresholds[0])?;

    let raw: Result<Vec<Bound>, BoundsError> = match kind {
        CurveKind::MiddleQueue | CurveKind::MiddleDelay | CurveKind::EndToEndDelay => {
            // Share one evaluator so the input-delay factor table is computed
            // once per curve.
            let eval = MiddleEvaluator::new(p, policy)?;
            thresholds
                .par_iter()
                .map(|&x| match kind {
                    CurveKind::MiddleQueue => eval.queue_tail(x),
                    CurveKind::MiddleDelay => {
                        eval.queue_tail(p.time_scale * x * p.beta_eff / p.m_eff)
                    }
                    CurveKind::EndToEndDelay => {
                        let scaled = p.time_scale * x / (2.0 * p.m_eff);
                        let f = input::queue_tail(scaled * p.alpha_eff, p, policy)?;
                        let g = eval.queue_tail(scaled * p.beta_eff)?;
                        Ok(Bound::new(f.value + g.value, f.truncation_capped || g.truncation_capped))
                    }
                    _ => unreachable!(),
                })
                .collect()
        }
        _ => thresholds
            .par_iter()
            .map(|&x| match kind {
                CurveKind::InputQueue => input_queue_tail(x, p, policy),
                CurveKind::InputDelay => input_delay_tail(x, p, policy, DelayScope::SingleLink),
                CurveKind::OutputQueue { epsilon, sigma_k } => {
                    output_queue_tail(x, p, epsilon, sigma_k, policy)
                }
                CurveKind::OutputDelay { epsilon, sigma_k } => {
                    output_delay_tail(x, p, epsilon, sigma_k, policy)
                }
                CurveKind::MiddleQueueCorrected => middle_queue_tail_corrected(x, p, policy),
                _ => unreachable!(),
            })
            .collect(),
    };
    Ok(TailCurve::assemble(thresholds, raw?))
}

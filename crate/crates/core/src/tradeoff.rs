//! Energy/performance tradeoff over the number of active middle-stage nodes.
//!
//! A maximum load of `r_bar` needs at most `ceil(r_bar * m)` active nodes to
//! avoid long-term overload; activating more buys smaller queue and delay
//! bounds at higher power. [`frontier`] sweeps the active count and reports,
//! for each, the power draw and the smallest delay (and middle-queue)
//! threshold whose tail bound meets a target probability.

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{
    canonicalize, end_to_end_delay_tail, middle_queue_tail, BoundsError, EvalPolicy,
};
use crate::model::{ModelError, PowerModel, RouterConfig, TrafficSpec};

/// Search cap on thresholds: beyond this many slots (or packets) a point is
/// reported unmeetable rather than searched further.
pub const SEARCH_CAP: u64 = 1_000_000;

/// Snap tolerance: loads within this of an integer multiple are treated as
/// exact before taking ceilings.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TradeoffError {
    #[error("maximum load {0} exceeds 1: traffic is inadmissible")]
    LoadAboveOne(f64),
    #[error("load {0} must be positive and finite")]
    InvalidLoad(f64),
    #[error("target probability {0} must lie in (0, 1)")]
    InvalidTarget(f64),
    #[error("no feasible configuration: every active-node count leaves an effective speedup <= 1")]
    NoFeasiblePoint,
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One sweep point of the energy/delay frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub m_active: usize,
    pub power: f64,
    /// Both effective speedups exceed 1, so finite bounds exist.
    pub feasible: bool,
    /// Smallest integer delay `d` with end-to-end tail <= target; `None` for
    /// infeasible points, or when the search cap was reached.
    pub delay_bound_at_target: Option<u64>,
    /// Smallest integer queue size with middle-stage tail <= target.
    pub queue_bound_at_target: Option<u64>,
}

/// Minimum active nodes for long-term stability: `ceil(r_bar * m)`, with
/// loads within [`SNAP_TOL`] of an integer snapped before the ceiling.
/// `r_bar = 0` legitimately needs no nodes.
pub fn min_active_nodes(r_bar: f64, m: usize) -> Result<usize, TradeoffError> {
    if !r_bar.is_finite() || r_bar < 0.0 {
        return Err(TradeoffError::InvalidLoad(r_bar));
    }
    if r_bar > 1.0 + SNAP_TOL {
        return Err(TradeoffError::LoadAboveOne(r_bar));
    }
    Ok(snapped_ceil(r_bar.min(1.0) * m as f64) as usize)
}

fn snapped_ceil(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= SNAP_TOL {
        nearest
    } else {
        x.ceil()
    }
}

/// Sweeps `m_active` over every count that could carry the load and attaches
/// power and threshold bounds. The sweep starts at `floor(m r_bar / min(alpha,
/// beta))`, the last count at which an effective speedup reaches 1, so the
/// first infeasible point is visible in the output; it ends at `m`.
pub fn frontier(
    cfg: &RouterConfig,
    spec: &TrafficSpec,
    power: &PowerModel,
    target_prob: f64,
    policy: &EvalPolicy,
) -> Result<Vec<FrontierPoint>, TradeoffError> {
    let r_bar = spec.max_load();
    let points = frontier_for_load(cfg, r_bar, power, target_prob, policy)?;
    Ok(points)
}

fn frontier_for_load(
    cfg: &RouterConfig,
    r_bar: f64,
    power: &PowerModel,
    target_prob: f64,
    policy: &EvalPolicy,
) -> Result<Vec<FrontierPoint>, TradeoffError> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(TradeoffError::InvalidTarget(target_prob));
    }
    if !r_bar.is_finite() || r_bar <= 0.0 {
        return Err(TradeoffError::InvalidLoad(r_bar));
    }
    if r_bar > 1.0 + SNAP_TOL {
        return Err(TradeoffError::LoadAboveOne(r_bar));
    }

    let lo_raw = snapped_ceil(cfg.m as f64 * r_bar / cfg.alpha.min(cfg.beta)).max(1.0);
    let lo = (lo_raw as usize).min(cfg.m);
    let counts: Vec<usize> = (lo..=cfg.m).collect();
    let points: Result<Vec<FrontierPoint>, TradeoffError> = counts
        .par_iter()
        .map(|&m_active| {
            let sweep_cfg = RouterConfig { m_active, ..cfg.clone() };
            let point_power = power.power(m_active)?;
            match canonicalize(&sweep_cfg, r_bar) {
                Err(BoundsError::Overload { .. }) => Ok(FrontierPoint {
                    m_active,
                    power: point_power,
                    feasible: false,
                    delay_bound_at_target: None,
                    queue_bound_at_target: None,
                }),
                Err(e) => Err(e.into()),
                Ok(p) => {
                    let delay = smallest_meeting(target_prob, |d| {
                        end_to_end_delay_tail(d as f64, &p, policy).map(|b| b.probability())
                    })?;
                    let queue = smallest_meeting(target_prob, |q| {
                        middle_queue_tail(q as f64, &p, policy).map(|b| b.probability())
                    })?;
                    Ok(FrontierPoint {
                        m_active,
                        power: point_power,
                        feasible: true,
                        delay_bound_at_target: delay,
                        queue_bound_at_target: queue,
                    })
                }
            }
        })
        .collect();
    let points = points?;
    if !points.iter().any(|p| p.feasible) {
        return Err(TradeoffError::NoFeasiblePoint);
    }
    Ok(points)
}

/// Binary search for the smallest integer threshold whose (non-increasing)
/// tail meets the target, or `None` past [`SEARCH_CAP`].
fn smallest_meeting(
    target: f64,
    tail: impl Fn(u64) -> Result<f64, BoundsError>,
) -> Result<Option<u64>, TradeoffError> {
    if tail(SEARCH_CAP)? > target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0u64, SEARCH_CAP);
    // Invariant: tail(hi) <= target, tail(lo) unknown-or-above.
    if tail(0)? <= target {
        return Ok(Some(0));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// A row of the load lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupRow {
    pub r_bar: f64,
    /// Smallest active count whose frontier point meets the delay budget;
    /// `None` when no count does.
    pub recommended: Option<usize>,
}

/// For each load in the grid, the smallest `m_active` whose end-to-end delay
/// bound meets `delay_budget` slots at the target probability.
pub fn lookup_table(
    cfg: &RouterConfig,
    power: &PowerModel,
    load_grid: &[f64],
    target_prob: f64,
    delay_budget: u64,
    policy: &EvalPolicy,
) -> Result<Vec<LookupRow>, TradeoffError> {
    load_grid
        .iter()
        .map(|&r_bar| {
            let points = match frontier_for_load(cfg, r_bar, power, target_prob, policy) {
                Ok(points) => points,
                Err(TradeoffError::NoFeasiblePoint) => {
                    return Ok(LookupRow { r_bar, recommended: None })
                }
                Err(e) => return Err(e),
            };
            let recommended = points
                .iter()
                .find(|p| {
                    p.feasible && p.delay_bound_at_target.is_some_and(|d| d <= delay_budget)
                })
                .map(|p| p.m_active);
            Ok(LookupRow { r_bar, recommended })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::ChernoffForm;

    #[test]
    fn min_active_examples() {
        assert_eq!(min_active_nodes(0.45, 80).unwrap(), 36);
        assert_eq!(min_active_nodes(1.0, 80).unwrap(), 80);
        assert_eq!(min_active_nodes(0.0, 80).unwrap(), 0);
        // Snap guard: 0.3 * 3 = 0.8999999999999999 must not ceil to 1 extra.
        assert_eq!(min_active_nodes(0.3, 3).unwrap(), 1);
        assert_eq!(min_active_nodes(0.35, 80).unwrap(), 28);
        assert!(min_active_nodes(1.2, 80).is_err());
    }

    fn base_cfg() -> RouterConfig {
        RouterConfig::new(4, 8, 8, 2.0, 2.0, 0.05).unwrap()
    }

    #[test]
    fn frontier_marks_boundary_point_infeasible() {
        let cfg = base_cfg();
        let spec = TrafficSpec::uniform(4, 0.9, 0.0, 0.0).unwrap();
        let power = PowerModel::affine(0.0, 1.0).unwrap();
        let policy = EvalPolicy::numeric(ChernoffForm::Loose);
        let points = frontier(&cfg, &spec, &power, 1e-6, &policy).unwrap();
        // Sweep starts at floor(8 * 0.9 / 2) = 3; alpha_eff(3) = 2*3/(8*0.9)
        // = 0.833 <= 1 so the low points are infeasible until m' > 3.6.
        assert_eq!(points[0].m_active, 3);
        assert!(!points[0].feasible);
        assert!(points.last().unwrap().feasible);
        // Power strictly increasing for the affine model.
        for w in points.windows(2) {
            assert!(w[1].power > w[0].power);
        }
        // Delay bound non-increasing along feasible points.
        let feasible: Vec<_> = points.iter().filter(|p| p.feasible).collect();
        assert!(!feasible.is_empty());
        for w in feasible.windows(2) {
            assert!(w[1].delay_bound_at_target <= w[0].delay_bound_at_target);
        }
    }

    #[test]
    fn lookup_table_is_monotone_in_load() {
        let cfg = base_cfg();
        let power = PowerModel::affine(0.0, 1.0).unwrap();
        let policy = EvalPolicy::numeric(ChernoffForm::Loose);
        let rows =
            lookup_table(&cfg, &power, &[0.25, 0.5, 0.75, 1.0], 1e-4, SEARCH_CAP, &policy)
                .unwrap();
        let mut prev = 0usize;
        for row in &rows {
            let rec = row.recommended.expect("generous budget must be meetable");
            assert!(rec >= prev, "larger load recommended fewer nodes");
            prev = rec;
        }
    }

    #[test]
    fn no_feasible_point_is_an_error() {
        // alpha = beta = 1: no m' can push the effective speedup above 1.
        let cfg = RouterConfig::new(4, 8, 8, 1.0, 1.0, 0.05).unwrap();
        let spec = TrafficSpec::uniform(4, 0.9, 0.0, 0.0).unwrap();
        let power = PowerModel::affine(0.0, 1.0).unwrap();
        let policy = EvalPolicy::numeric(ChernoffForm::Loose);
        assert!(matches!(
            frontier(&cfg, &spec, &power, 1e-6, &policy),
            Err(TradeoffError::NoFeasiblePoint)
        ));
    }
}

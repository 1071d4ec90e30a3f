//! Analysis toolkit for a load-balanced router with a powered-down middle stage.
//!
//! The router has `n` inputs, `m` middle-stage nodes (of which `m'` are
//! active), and `n` outputs, joined by two input-buffered meshes. Packets are
//! spread uniformly at random over the active middle nodes, so no fabric
//! scheduling is needed; the price is queueing at both mesh stages. This crate
//! provides, for that architecture:
//!
//! - Chernoff tail bounds on queue sizes and delays at every stage, in both a
//!   closed geometric form and a numerically summed union-bound form
//!   ([`bounds`]),
//! - a slotted-time simulator that produces empirical tail distributions for
//!   validating the bounds ([`sim`]),
//! - an energy/delay tradeoff sweep over the number of active middle nodes
//!   ([`tradeoff`]).
//!
//! Traffic is `(sigma, r)`-constrained: at most `sigma + r * len` packets in
//! any window of `len` slots. [`model`] holds the router geometry, the traffic
//! specification, and the power model consumed by everything else.

pub mod bounds;
pub mod chernoff;
pub mod model;
pub mod sim;
pub mod tradeoff;

pub use bounds::{
    canonicalize, tail_curve, Bound, CanonicalParams, ChernoffForm, CurveKind, EvalPath,
    EvalPolicy, ScalingReading, TailCurve,
};
pub use chernoff::ChernoffParams;
pub use model::{AdmissibilityReport, PowerModel, RouterConfig, TrafficSpec};
pub use sim::{SimState, TailStats};
pub use tradeoff::FrontierPoint;

//! Slotted-time simulator of the three-stage router.
//!
//! Each slot: (1) Bernoulli arrival candidates are drawn per `(i, k)` pair
//! and admitted through the pair, input, and output token buckets (candidates
//! the shaper cannot yet admit wait in an unbounded pre-queue rather than
//! being dropped); (2) each admitted packet picks a middle node uniformly at
//! random among the active ones and joins its `ij` buffer; (3) links earn
//! service credit (`alpha/m`, `beta/m`, and 1 respectively, capped at
//! `1 + rate`) and any link with a whole credit and a nonempty queue serves
//! head-of-line. A packet served from one stage joins the next at the end of
//! the same slot and becomes eligible for service the following slot, so the
//! minimum exit time is two slots after admission; that deterministic
//! store-and-forward offset is excluded from all recorded delays to keep
//! them comparable with the fluid analysis.
//!
//! Runs are fully deterministic given `(config, spec, seed)`: every `(i, k)`
//! arrival process and the routing choice draw from independent, seed-derived
//! ChaCha streams, so results do not depend on iteration order.

mod shaper;
mod stats;

pub use stats::{empirical_tail, EmpiricalCurve, EmpiricalPoint, Histogram, Quantity, SimError, TailStats};

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::model::{RouterConfig, TrafficSpec};
use shaper::TokenBucket;

/// Stream id 0 is the routing stream; arrival streams follow per pair.
fn arrival_stream(i: usize, k: usize, n: usize) -> u64 {
    (i * n + k) as u64 + 1
}

#[derive(Debug, Clone, PartialEq)]
struct Packet {
    seq: u64,
    /// Per-queue FIFO ticket, reassigned at each enqueue.
    entry: u64,
    arrival: u64,
    output: u16,
    q1_exit: u64,
    q2_exit: u64,
}

/// A packet that left the router during the last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    pub arrival: u64,
    pub q1_exit: u64,
    pub q2_exit: u64,
    pub departure: u64,
    /// Queueing delay at the input stage (service wait excluded by the
    /// fluid-model convention: exit slot minus arrival slot).
    pub input_delay: u64,
    /// Queueing delay at the middle stage, net of the one-slot hop.
    pub middle_delay: u64,
    /// Queueing delay at the output link, net of the one-slot hop.
    pub output_delay: u64,
    /// Total delay net of the two-slot store-and-forward offset.
    pub end_to_end_delay: u64,
}

/// One FIFO with its service-credit accumulator and FIFO bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
struct Link {
    queue: VecDeque<Packet>,
    credit: f64,
    entered: u64,
    served: u64,
}

impl Link {
    fn push(&mut self, mut packet: Packet) {
        packet.entry = self.entered;
        self.entered += 1;
        self.queue.push_back(packet);
    }
}

/// Full simulator state: all queues, credits, shapers, and RNG streams.
#[derive(Debug, Clone)]
pub struct SimState {
    n: usize,
    m: usize,
    m_active: usize,
    alpha_rate: f64,
    beta_rate: f64,
    clock: u64,
    next_seq: u64,
    injected: u64,
    departed: u64,
    resident: u64,
    rates: Vec<f64>,
    pending: Vec<u64>,
    pair_buckets: Vec<TokenBucket>,
    input_buckets: Vec<TokenBucket>,
    output_buckets: Vec<TokenBucket>,
    q1: Vec<Link>,
    q2: Vec<Link>,
    q3: Vec<Link>,
    arrival_rngs: Vec<ChaCha12Rng>,
    routing_rng: ChaCha12Rng,
    /// Admission counts per (i, j, k) triple.
    assignments: Vec<u64>,
    step_departures: Vec<Departure>,
}

impl SimState {
    pub fn new(cfg: &RouterConfig, spec: &TrafficSpec, seed: u64) -> Result<Self, SimError> {
        let report = spec.validate_admissible(cfg)?;
        if !report.is_ok() {
            return Err(SimError::Inadmissible(report.violations));
        }
        let n = cfg.n;
        let m = cfg.m;

        let mut pair_buckets = Vec::with_capacity(n * n);
        let mut rates = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let rate = spec.rate(i, k);
                let bucket = TokenBucket::new(spec.pair_burst(i, k), rate);
                if rate > 0.0 && bucket.starves() {
                    return Err(SimError::ShaperStarvation(format!(
                        "pair ({i}, {k}) has rate {rate} but burst depth {} < 1",
                        spec.pair_burst(i, k)
                    )));
                }
                rates.push(rate);
                pair_buckets.push(bucket);
            }
        }
        let input_buckets: Vec<TokenBucket> = (0..n)
            .map(|_| TokenBucket::new(spec.aggregate_burst(), 1.0))
            .collect();
        let output_buckets: Vec<TokenBucket> = (0..n)
            .map(|_| TokenBucket::new(spec.aggregate_burst(), 1.0 - cfg.epsilon))
            .collect();
        for i in 0..n {
            if spec.input_rate(i) > 0.0 && input_buckets[i].starves() {
                return Err(SimError::ShaperStarvation(format!(
                    "input {i} carries traffic but aggregate burst {} < 1",
                    spec.aggregate_burst()
                )));
            }
        }
        for k in 0..n {
            if spec.output_rate(k) > 0.0 && output_buckets[k].starves() {
                return Err(SimError::ShaperStarvation(format!(
                    "output {k} carries traffic but aggregate burst {} < 1",
                    spec.aggregate_burst()
                )));
            }
        }

        let arrival_rngs = (0..n * n)
            .map(|idx| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(arrival_stream(idx / n, idx % n, n));
                rng
            })
            .collect();
        let mut routing_rng = ChaCha12Rng::seed_from_u64(seed);
        routing_rng.set_stream(0);

        Ok(Self {
            n,
            m,
            m_active: cfg.m_active,
            alpha_rate: cfg.alpha / m as f64,
            beta_rate: cfg.beta / m as f64,
            clock: 0,
            next_seq: 0,
            injected: 0,
            departed: 0,
            resident: 0,
            rates,
            pending: vec![0; n * n],
            pair_buckets,
            input_buckets,
            output_buckets,
            q1: vec![Link::default(); n * m],
            q2: vec![Link::default(); m * n],
            q3: vec![Link::default(); n],
            arrival_rngs,
            routing_rng,
            assignments: vec![0; n * m * n],
            step_departures: Vec::new(),
        })
    }

    /// Advances one slot: arrivals, shaping, routing, then service at the
    /// output, middle, and input stages (in that order, so a forwarded packet
    /// is not served twice in one slot).
    pub fn step(&mut self) {
        self.step_departures.clear();
        let (n, m) = (self.n, self.m);

        for bucket in self
            .pair_buckets
            .iter_mut()
            .chain(self.input_buckets.iter_mut())
            .chain(self.output_buckets.iter_mut())
        {
            bucket.refill();
        }

        // Arrivals: Bernoulli candidates enter the pair pre-queue, then the
        // shaper admits as many as all three buckets allow.
        for i in 0..n {
            for k in 0..n {
                let idx = i * n + k;
                let rate = self.rates[idx];
                if rate > 0.0 && self.arrival_rngs[idx].gen::<f64>() < rate {
                    self.pending[idx] += 1;
                }
                while self.pending[idx] > 0
                    && self.pair_buckets[idx].has_token()
                    && self.input_buckets[i].has_token()
                    && self.output_buckets[k].has_token()
                {
                    self.pair_buckets[idx].take();
                    self.input_buckets[i].take();
                    self.output_buckets[k].take();
                    self.pending[idx] -= 1;
                    let j = self.routing_rng.gen_range(0..self.m_active);
                    self.assignments[(i * m + j) * n + k] += 1;
                    let packet = Packet {
                        seq: self.next_seq,
                        entry: 0,
                        arrival: self.clock,
                        output: k as u16,
                        q1_exit: 0,
                        q2_exit: 0,
                    };
                    self.next_seq += 1;
                    self.injected += 1;
                    self.resident += 1;
                    self.q1[i * m + j].push(packet);
                }
            }
        }

        let clock = self.clock;
        let alpha_rate = self.alpha_rate;
        let beta_rate = self.beta_rate;
        let SimState { q1, q2, q3, step_departures, .. } = self;

        // Output links (rate 1): departures.
        for link in q3.iter_mut() {
            serve(link, 1.0, |packet| {
                step_departures.push(Departure {
                    arrival: packet.arrival,
                    q1_exit: packet.q1_exit,
                    q2_exit: packet.q2_exit,
                    departure: clock,
                    input_delay: packet.q1_exit - packet.arrival,
                    middle_delay: packet.q2_exit - packet.q1_exit - 1,
                    output_delay: clock - packet.q2_exit - 1,
                    end_to_end_delay: clock - packet.arrival - 2,
                });
            });
        }

        // Second mesh: q2 -> q3.
        for j in 0..m {
            for k in 0..n {
                let (link, dest) = (&mut q2[j * n + k], &mut q3[k]);
                serve(link, beta_rate, |mut packet| {
                    packet.q2_exit = clock;
                    dest.push(packet);
                });
            }
        }

        // First mesh: q1 -> q2. Forwarded packets land at the end of the
        // slot, after the second mesh has already been served.
        for i in 0..n {
            for j in 0..m {
                let link = &mut q1[i * m + j];
                let row = &mut q2[j * n..(j + 1) * n];
                serve(link, alpha_rate, |mut packet| {
                    packet.q1_exit = clock;
                    row[packet.output as usize].push(packet);
                });
            }
        }

        self.departed += self.step_departures.len() as u64;
        self.resident -= self.step_departures.len() as u64;
        self.clock += 1;
        if self.clock.is_multiple_of(1024) {
            self.assert_conservation();
        }
    }

    /// Packets injected must equal packets departed plus packets resident.
    pub fn assert_conservation(&self) {
        let recount: u64 = self
            .q1
            .iter()
            .chain(self.q2.iter())
            .chain(self.q3.iter())
            .map(|l| l.queue.len() as u64)
            .sum();
        assert_eq!(
            self.injected,
            self.departed + recount,
            "conservation violated at slot {}: injected {} departed {} resident {}",
            self.clock,
            self.injected,
            self.departed,
            recount
        );
        assert_eq!(recount, self.resident);
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }
    pub fn injected(&self) -> u64 {
        self.injected
    }
    pub fn departed(&self) -> u64 {
        self.departed
    }
    pub fn resident(&self) -> u64 {
        self.resident
    }
    pub fn q1_len(&self, i: usize, j: usize) -> usize {
        self.q1[i * self.m + j].queue.len()
    }
    pub fn q2_len(&self, j: usize, k: usize) -> usize {
        self.q2[j * self.n + k].queue.len()
    }
    pub fn q3_len(&self, k: usize) -> usize {
        self.q3[k].queue.len()
    }
    pub fn pending(&self, i: usize, k: usize) -> u64 {
        self.pending[i * self.n + k]
    }
    /// Cumulative admissions routed as (i, j, k).
    pub fn assignment_count(&self, i: usize, j: usize, k: usize) -> u64 {
        self.assignments[(i * self.m + j) * self.n + k]
    }
    pub fn admitted(&self, i: usize, k: usize) -> u64 {
        (0..self.m).map(|j| self.assignment_count(i, j, k)).sum()
    }
    /// Departures of the most recent step.
    pub fn step_departures(&self) -> &[Departure] {
        &self.step_departures
    }

    fn max_occupancy(&self) -> u64 {
        self.q1
            .iter()
            .chain(self.q2.iter())
            .chain(self.q3.iter())
            .map(|l| l.queue.len() as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Serves one link: credit accrues (capped at `1 + rate`) and each whole
/// credit moves one head-of-line packet, FIFO order asserted.
fn serve(link: &mut Link, rate: f64, mut forward: impl FnMut(Packet)) {
    link.credit = (link.credit + rate).min(1.0 + rate);
    let budget = link.credit.floor() as u64;
    let count = budget.min(link.queue.len() as u64);
    for _ in 0..count {
        let packet = link.queue.pop_front().expect("count <= len");
        assert_eq!(packet.entry, link.served, "FIFO order violated");
        link.served += 1;
        forward(packet);
    }
    link.credit -= count as f64;
    debug_assert!(
        link.queue.is_empty() || link.credit < 1.0,
        "work conservation violated: backlog with a whole credit left"
    );
}

/// Runs `horizon` slots, collecting statistics from slot `warmup` onward.
/// Deterministic: identical inputs give identical stats.
pub fn run(
    cfg: &RouterConfig,
    spec: &TrafficSpec,
    seed: u64,
    horizon: u64,
    warmup: u64,
) -> Result<TailStats, SimError> {
    if warmup > horizon {
        return Err(SimError::WarmupBeyondHorizon { horizon, warmup });
    }
    let mut state = SimState::new(cfg, spec, seed)?;
    let mut stats = TailStats::new(cfg.n, cfg.m, horizon, warmup);
    let half = horizon / 2;
    for slot in 0..horizon {
        state.step();
        let sampling = slot >= warmup;
        if sampling {
            for link in &state.q1 {
                stats.input_queue.record(link.queue.len());
            }
            for link in &state.q2 {
                stats.middle_queue.record(link.queue.len());
            }
            for link in &state.q3 {
                stats.output_queue.record(link.queue.len());
            }
            for d in state.step_departures() {
                stats.input_delay.record(d.input_delay as usize);
                stats.middle_delay.record(d.middle_delay as usize);
                stats.output_delay.record(d.output_delay as usize);
                stats.end_to_end_delay.record(d.end_to_end_delay as usize);
            }
        }
        let occupancy = state.max_occupancy();
        if slot < half {
            stats.max_queue_first_half = stats.max_queue_first_half.max(occupancy);
        } else {
            stats.max_queue_second_half = stats.max_queue_second_half.max(occupancy);
        }
    }
    state.assert_conservation();
    stats.assignments.copy_from_slice(&state.assignments);
    stats.injected = state.injected();
    stats.departed = state.departed();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, m: usize, m_active: usize, alpha: f64, beta: f64) -> RouterConfig {
        RouterConfig::new(n, m, m_active, alpha, beta, 0.05).unwrap()
    }

    #[test]
    fn zero_traffic_stays_empty() {
        let cfg = cfg(2, 2, 2, 2.0, 2.0);
        let spec = TrafficSpec::uniform(2, 0.0, 0.0, 0.0).unwrap();
        let mut state = SimState::new(&cfg, &spec, 1).unwrap();
        for _ in 0..50 {
            state.step();
        }
        assert_eq!(state.injected(), 0);
        assert_eq!(state.resident(), 0);
        state.assert_conservation();
    }

    #[test]
    fn hand_trace_single_link_full_rate() {
        // n = m = 1, alpha = beta = 2, deterministic one arrival per slot.
        // Service capacity is 2/slot, so the input buffer drains the arrival
        // in its own slot: end-of-slot occupancy is always 0, and from slot 2
        // onward exactly one packet departs per slot with zero recorded delay.
        let cfg = cfg(1, 1, 1, 2.0, 2.0);
        let spec = TrafficSpec::new(vec![vec![1.0]], vec![vec![50.0]], 50.0).unwrap();
        // epsilon must leave room for rate 1.0 at the output.
        let cfg = RouterConfig { epsilon: 1e-9, ..cfg };
        let mut state = SimState::new(&cfg, &spec, 7).unwrap();
        for slot in 0..10 {
            state.step();
            assert!(state.q1_len(0, 0) <= 1, "q1 exceeded 1 at slot {slot}");
            assert_eq!(state.q1_len(0, 0), 0, "service capacity 2 drains the arrival");
            if slot >= 2 {
                assert_eq!(state.step_departures().len(), 1);
                let d = state.step_departures()[0];
                assert_eq!(d.end_to_end_delay, 0);
                assert_eq!(d.input_delay, 0);
                assert_eq!(d.middle_delay, 0);
                assert_eq!(d.output_delay, 0);
            }
        }
        assert_eq!(state.injected(), 10);
        assert_eq!(state.departed(), 8);
        state.assert_conservation();
    }

    #[test]
    fn per_link_arrival_rates_near_expectation() {
        // n=2, m=2, rates 0.4 per pair, 1e5 slots: each (i, j, k) triple
        // should see rate r_ik / m' = 0.2 within 3 standard errors.
        let cfg = cfg(2, 2, 2, 2.0, 2.0);
        let spec = TrafficSpec::uniform(2, 0.8, 4.0, 8.0).unwrap();
        let mut state = SimState::new(&cfg, &spec, 42).unwrap();
        let slots = 100_000u64;
        for _ in 0..slots {
            state.step();
        }
        let se = (0.2_f64 * 0.8 / slots as f64).sqrt();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let rate = state.assignment_count(i, j, k) as f64 / slots as f64;
                    assert!(
                        (rate - 0.2).abs() <= 3.0 * se,
                        "triple ({i},{j},{k}) rate {rate} outside 3 SE of 0.2"
                    );
                }
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = cfg(2, 3, 3, 2.0, 2.0);
        let spec = TrafficSpec::uniform(2, 0.6, 2.0, 4.0).unwrap();
        let a = run(&cfg, &spec, 99, 5_000, 500).unwrap();
        let b = run(&cfg, &spec, 99, 5_000, 500).unwrap();
        assert_eq!(a, b);
        let c = run(&cfg, &spec, 100, 5_000, 500).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn warmup_equal_horizon_gives_empty_stats() {
        let cfg = cfg(2, 2, 2, 2.0, 2.0);
        let spec = TrafficSpec::uniform(2, 0.5, 2.0, 4.0).unwrap();
        let stats = run(&cfg, &spec, 1, 100, 100).unwrap();
        assert_eq!(stats.input_queue.total(), 0);
        assert_eq!(stats.sampled_slots, 0);
        assert!(matches!(
            empirical_tail(&stats, Quantity::InputQueue, &[0]),
            Err(SimError::NoSamples(_))
        ));
        assert!(run(&cfg, &spec, 1, 100, 101).is_err());
    }

    #[test]
    fn inadmissible_traffic_is_refused() {
        let cfg = cfg(2, 2, 2, 2.0, 2.0);
        let rates = vec![vec![0.6, 0.0], vec![0.6, 0.0]];
        let spec = TrafficSpec::new(rates, vec![vec![2.0; 2]; 2], 4.0).unwrap();
        assert!(matches!(run(&cfg, &spec, 1, 10, 0), Err(SimError::Inadmissible(_))));
    }

    #[test]
    fn starving_shaper_is_refused() {
        let cfg = cfg(2, 2, 2, 2.0, 2.0);
        let spec = TrafficSpec::uniform(2, 0.5, 0.4, 4.0).unwrap();
        assert!(matches!(SimState::new(&cfg, &spec, 1), Err(SimError::ShaperStarvation(_))));
    }

    #[test]
    fn deferred_candidates_are_not_dropped() {
        // A pair bucket with depth 1 and low rate defers bursts; admitted
        // packets must still account for every candidate eventually.
        let cfg = cfg(1, 1, 1, 2.0, 2.0);
        let spec = TrafficSpec::new(vec![vec![0.5]], vec![vec![1.0]], 8.0).unwrap();
        let mut state = SimState::new(&cfg, &spec, 5).unwrap();
        for _ in 0..10_000 {
            state.step();
        }
        let candidates = state.admitted(0, 0) + state.pending(0, 0);
        // Roughly half the slots produce a candidate.
        assert!(candidates > 4_500 && candidates < 5_500);
    }
}

//! Measurement side of a run: histograms over integer thresholds and the
//! empirical tail curves derived from them.

use thiserror::Error;

use crate::model::AdmissibilityViolation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("traffic is not admissible: {0:?}")]
    Inadmissible(Vec<AdmissibilityViolation>),
    #[error("shaper would starve: {0}")]
    ShaperStarvation(String),
    #[error("warmup {warmup} exceeds horizon {horizon}")]
    WarmupBeyondHorizon { horizon: u64, warmup: u64 },
    #[error("no samples recorded for {0:?}")]
    NoSamples(Quantity),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// A monitored tail quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    InputQueue,
    MiddleQueue,
    OutputQueue,
    InputDelay,
    MiddleDelay,
    OutputDelay,
    EndToEndDelay,
}

impl Quantity {
    pub fn id(&self) -> &'static str {
        match self {
            Self::InputQueue => "input_q",
            Self::MiddleQueue => "middle_q",
            Self::OutputQueue => "output_q",
            Self::InputDelay => "input_d",
            Self::MiddleDelay => "middle_d",
            Self::OutputDelay => "output_d",
            Self::EndToEndDelay => "e2e_d",
        }
    }
}

/// Counts of an integer-valued quantity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn record(&mut self, value: usize) {
        if value >= self.counts.len() {
            self.counts.resize(value + 1, 0);
        }
        self.counts[value] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of samples at or above `threshold`.
    pub fn tail_count(&self, threshold: u64) -> u64 {
        let start = threshold.min(self.counts.len() as u64) as usize;
        self.counts[start..].iter().sum()
    }

    pub fn max_value(&self) -> Option<u64> {
        self.counts.iter().rposition(|&c| c > 0).map(|v| v as u64)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let weighted: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(v, &c)| v as f64 * c as f64)
            .sum();
        Some(weighted / self.total as f64)
    }
}

/// Everything measured during a run. Queue occupancies are sampled once per
/// slot per queue (pooled over same-stage links) after warmup; delays are
/// recorded per packet at departure. Assignment counts feed the routing
/// uniformity check; the per-half queue maxima feed the stability check.
#[derive(Debug, Clone, PartialEq)]
pub struct TailStats {
    pub input_queue: Histogram,
    pub middle_queue: Histogram,
    pub output_queue: Histogram,
    pub input_delay: Histogram,
    pub middle_delay: Histogram,
    pub output_delay: Histogram,
    pub end_to_end_delay: Histogram,
    /// Admissions per (input, middle, output) triple, flattened as
    /// `(i * m + j) * n + k`.
    pub assignments: Vec<u64>,
    pub n: usize,
    pub m: usize,
    pub horizon: u64,
    pub warmup: u64,
    /// Slots that contributed queue samples (`horizon - warmup`).
    pub sampled_slots: u64,
    pub injected: u64,
    pub departed: u64,
    /// Largest queue occupancy seen anywhere in the first half of the run.
    pub max_queue_first_half: u64,
    /// Largest queue occupancy seen anywhere in the second half.
    pub max_queue_second_half: u64,
}

impl TailStats {
    pub(crate) fn new(n: usize, m: usize, horizon: u64, warmup: u64) -> Self {
        Self {
            input_queue: Histogram::default(),
            middle_queue: Histogram::default(),
            output_queue: Histogram::default(),
            input_delay: Histogram::default(),
            middle_delay: Histogram::default(),
            output_delay: Histogram::default(),
            end_to_end_delay: Histogram::default(),
            assignments: vec![0; n * m * n],
            n,
            m,
            horizon,
            warmup,
            sampled_slots: horizon.saturating_sub(warmup),
            injected: 0,
            departed: 0,
            max_queue_first_half: 0,
            max_queue_second_half: 0,
        }
    }

    pub fn histogram(&self, quantity: Quantity) -> &Histogram {
        match quantity {
            Quantity::InputQueue => &self.input_queue,
            Quantity::MiddleQueue => &self.middle_queue,
            Quantity::OutputQueue => &self.output_queue,
            Quantity::InputDelay => &self.input_delay,
            Quantity::MiddleDelay => &self.middle_delay,
            Quantity::OutputDelay => &self.output_delay,
            Quantity::EndToEndDelay => &self.end_to_end_delay,
        }
    }

    /// Total admissions of the `(i, k)` pair.
    pub fn admitted(&self, input: usize, output: usize) -> u64 {
        (0..self.m).map(|j| self.assignments[(input * self.m + j) * self.n + output]).sum()
    }

    /// Total packets assigned to middle node `j`.
    pub fn assigned_to(&self, middle: usize) -> u64 {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |k| (i, k)))
            .map(|(i, k)| self.assignments[(i * self.m + middle) * self.n + k])
            .sum()
    }
}

/// One point of an empirical tail curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPoint {
    pub threshold: u64,
    pub probability: f64,
    pub exceed_count: u64,
}

/// An empirical tail with its sample count, for comparison against bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub points: Vec<EmpiricalPoint>,
    pub samples: u64,
}

/// Empirical `P(X >= x)` at each threshold.
pub fn empirical_tail(
    stats: &TailStats,
    quantity: Quantity,
    thresholds: &[u64],
) -> Result<EmpiricalCurve, SimError> {
    let hist = stats.histogram(quantity);
    if hist.total() == 0 {
        return Err(SimError::NoSamples(quantity));
    }
    let samples = hist.total();
    let points = thresholds
        .iter()
        .map(|&t| {
            let exceed = hist.tail_count(t);
            EmpiricalPoint {
                threshold: t,
                probability: exceed as f64 / samples as f64,
                exceed_count: exceed,
            }
        })
        .collect();
    Ok(EmpiricalCurve { points, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_tail_counts() {
        let mut h = Histogram::default();
        for v in [0, 0, 1, 3, 5] {
            h.record(v);
        }
        assert_eq!(h.total(), 5);
        assert_eq!(h.tail_count(0), 5);
        assert_eq!(h.tail_count(1), 3);
        assert_eq!(h.tail_count(4), 1);
        assert_eq!(h.tail_count(6), 0);
        assert_eq!(h.max_value(), Some(5));
        assert!((h.mean().unwrap() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn empirical_tail_edge_cases() {
        let mut stats = TailStats::new(1, 1, 10, 0);
        assert!(matches!(
            empirical_tail(&stats, Quantity::InputQueue, &[0]),
            Err(SimError::NoSamples(Quantity::InputQueue))
        ));
        stats.input_queue.record(5);
        let c = empirical_tail(&stats, Quantity::InputQueue, &[3, 6]).unwrap();
        assert_eq!(c.points[0].probability, 1.0);
        assert_eq!(c.points[1].probability, 0.0);
        assert_eq!(c.samples, 1);
    }

    #[test]
    fn empirical_tail_is_non_increasing() {
        let mut stats = TailStats::new(1, 1, 10, 0);
        for v in [0, 1, 1, 2, 4, 7, 7, 9] {
            stats.end_to_end_delay.record(v);
        }
        let thresholds: Vec<u64> = (0..12).collect();
        let c = empirical_tail(&stats, Quantity::EndToEndDelay, &thresholds).unwrap();
        for w in c.points.windows(2) {
            assert!(w[1].probability <= w[0].probability);
        }
    }
}

//! Router geometry, traffic specification, admissibility, and the power model.
//!
//! Time is slotted and packets have unit size. Each link of the first mesh
//! runs at `alpha / m` packets per slot, each link of the second mesh at
//! `beta / m`, and each output link at 1 packet per slot. All types here are
//! immutable after construction and safe to share across threads.

use thiserror::Error;

/// Tolerance absorbing floating-point rounding when comparing sums of rates
/// against their limits.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;

/// Errors raised while building or querying model types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid router config: {0}")]
    InvalidConfig(String),
    #[error("rates matrix is {rows}x{cols}, expected {n}x{n}")]
    DimensionMismatch { rows: usize, cols: usize, n: usize },
    #[error("negative rate {rate} at pair ({input}, {output})")]
    NegativeRate { input: usize, output: usize, rate: f64 },
    #[error("negative burst {burst} at pair ({input}, {output})")]
    NegativeBurst { input: usize, output: usize, burst: f64 },
    #[error("invalid power model: {0}")]
    InvalidPowerModel(String),
    #[error("active node count {m_active} outside table range 0..={max}")]
    PowerOutOfRange { m_active: usize, max: usize },
}

/// Router geometry and link-rate parameters.
///
/// `epsilon` is the output underload margin: admissible traffic loads each
/// output at rate at most `1 - epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterConfig {
    pub n: usize,
    pub m: usize,
    pub m_active: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl RouterConfig {
    /// Builds a config, checking the structural invariants.
    ///
    /// Speedups only need to be positive here; values `<= 1` are legal at the
    /// type level so that the scaling transform can produce (and then reject)
    /// effective speedups below 1.
    pub fn new(
        n: usize,
        m: usize,
        m_active: usize,
        alpha: f64,
        beta: f64,
        epsilon: f64,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidConfig("n must be >= 1".into()));
        }
        if m == 0 {
            return Err(ModelError::InvalidConfig("m must be >= 1".into()));
        }
        if m_active == 0 || m_active > m {
            return Err(ModelError::InvalidConfig(format!(
                "m_active must satisfy 1 <= m_active <= m, got {m_active} with m = {m}"
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ModelError::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(ModelError::InvalidConfig(format!("beta must be > 0, got {beta}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        Ok(Self { n, m, m_active, alpha, beta, epsilon })
    }
}

/// A single violated admissibility constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissibilityViolation {
    /// Row sum `r_i` exceeds the input line rate 1.
    InputRate { input: usize, sum: f64, limit: f64 },
    /// Column sum `r_k` exceeds the underloaded output rate `1 - epsilon`.
    OutputRate { output: usize, sum: f64, limit: f64 },
}

/// Outcome of [`TrafficSpec::validate_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub violations: Vec<AdmissibilityViolation>,
}

impl AdmissibilityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Per-pair rates and burst parameters of the offered traffic.
///
/// The `(i, k)` flow is `(sigma_ik, r_ik)`-constrained, each input is
/// `(sigma, 1)`-constrained and each output `(sigma, 1 - epsilon)`-constrained.
/// The three constraints are enforced independently; no cross-consistency
/// between the pair bursts and the aggregate burst is assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    n: usize,
    rates: Vec<f64>,
    pair_bursts: Vec<f64>,
    aggregate_burst: f64,
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    max_load: f64,
}

impl TrafficSpec {
    /// Builds a spec from an `n x n` rates matrix and matching pair bursts.
    pub fn new(
        rates: Vec<Vec<f64>>,
        pair_bursts: Vec<Vec<f64>>,
        aggregate_burst: f64,
    ) -> Result<Self, ModelError> {
        let n = rates.len();
        if n == 0 {
            return Err(ModelError::DimensionMismatch { rows: 0, cols: 0, n: 0 });
        }
        for (i, row) in rates.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::DimensionMismatch { rows: n, cols: row.len(), n });
            }
            for (k, &r) in row.iter().enumerate() {
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(ModelError::NegativeRate { input: i, output: k, rate: r });
                }
            }
        }
        if pair_bursts.len() != n {
            return Err(ModelError::DimensionMismatch { rows: pair_bursts.len(), cols: n, n });
        }
        for (i, row) in pair_bursts.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::DimensionMismatch { rows: n, cols: row.len(), n });
            }
            for (k, &b) in row.iter().enumerate() {
                if !(b >= 0.0) || !b.is_finite() {
                    return Err(ModelError::NegativeBurst { input: i, output: k, burst: b });
                }
            }
        }
        if !(aggregate_burst >= 0.0) || !aggregate_burst.is_finite() {
            return Err(ModelError::NegativeBurst { input: 0, output: 0, burst: aggregate_burst });
        }

        let flat_rates: Vec<f64> = rates.into_iter().flatten().collect();
        let flat_bursts: Vec<f64> = pair_bursts.into_iter().flatten().collect();
        let mut row_sums = vec![0.0; n];
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                row_sums[i] += flat_rates[i * n + k];
                col_sums[k] += flat_rates[i * n + k];
            }
        }
        let max_load = row_sums
            .iter()
            .chain(col_sums.iter())
            .fold(0.0_f64, |acc, &s| acc.max(s));
        Ok(Self {
            n,
            rates: flat_rates,
            pair_bursts: flat_bursts,
            aggregate_burst,
            row_sums,
            col_sums,
            max_load,
        })
    }

    /// Uniform traffic: every pair carries `load / n`, so each input and each
    /// output is loaded at exactly `load`.
    pub fn uniform(
        n: usize,
        load: f64,
        pair_burst: f64,
        aggregate_burst: f64,
    ) -> Result<Self, ModelError> {
        let rates = vec![vec![load / n as f64; n]; n];
        let bursts = vec![vec![pair_burst; n]; n];
        Self::new(rates, bursts, aggregate_burst)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate(&self, input: usize, output: usize) -> f64 {
        self.rates[input * self.n + output]
    }

    pub fn pair_burst(&self, input: usize, output: usize) -> f64 {
        self.pair_bursts[input * self.n + output]
    }

    pub fn aggregate_burst(&self) -> f64 {
        self.aggregate_burst
    }

    /// Row sum `r_i`: total rate offered at input `i`.
    pub fn input_rate(&self, input: usize) -> f64 {
        self.row_sums[input]
    }

    /// Column sum `r_k`: total rate destined to output `k`.
    pub fn output_rate(&self, output: usize) -> f64 {
        self.col_sums[output]
    }

    /// The maximum load `r_bar`: the exact maximum over all row and column
    /// sums. Zero for an all-zero matrix.
    pub fn max_load(&self) -> f64 {
        self.max_load
    }

    /// Checks the rate part of admissibility: every `r_i <= 1` and every
    /// `r_k <= 1 - epsilon` (within [`ADMISSIBILITY_TOL`]). The burst part of
    /// the traffic contract is enforced at runtime by the simulator's shapers.
    pub fn validate_admissible(&self, cfg: &RouterConfig) -> Result<AdmissibilityReport, ModelError> {
        if self.n != cfg.n {
            return Err(ModelError::DimensionMismatch { rows: self.n, cols: self.n, n: cfg.n });
        }
        let mut violations = Vec::new();
        for i in 0..self.n {
            if self.row_sums[i] > 1.0 + ADMISSIBILITY_TOL {
                violations.push(AdmissibilityViolation::InputRate {
                    input: i,
                    sum: self.row_sums[i],
                    limit: 1.0,
                });
            }
        }
        let out_limit = 1.0 - cfg.epsilon;
        for k in 0..self.n {
            if self.col_sums[k] > out_limit + ADMISSIBILITY_TOL {
                violations.push(AdmissibilityViolation::OutputRate {
                    output: k,
                    sum: self.col_sums[k],
                    limit: out_limit,
                });
            }
        }
        Ok(AdmissibilityReport { violations })
    }
}

/// Power drawn as a function of the number of active middle-stage nodes.
///
/// Energy units are abstract; only relative comparisons along a sweep are
/// meaningful.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerModel {
    /// `w(m') = base + per_node * m'`.
    Affine { base: f64, per_node: f64 },
    /// Explicit table of length `m + 1` indexed by `m'`.
    Table(Vec<f64>),
}

impl PowerModel {
    pub fn affine(base: f64, per_node: f64) -> Result<Self, ModelError> {
        if !(base >= 0.0) {
            return Err(ModelError::InvalidPowerModel(format!("w(0) = {base} must be >= 0")));
        }
        if !(per_node >= 0.0) {
            return Err(ModelError::InvalidPowerModel(format!(
                "per-node coefficient {per_node} must be >= 0 (w must be non-decreasing)"
            )));
        }
        Ok(Self::Affine { base, per_node })
    }

    pub fn table(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidPowerModel("table must be non-empty".into()));
        }
        if !(values[0] >= 0.0) {
            return Err(ModelError::InvalidPowerModel(format!("w(0) = {} must be >= 0", values[0])));
        }
        for w in values.windows(2) {
            if w[1] < w[0] {
                return Err(ModelError::InvalidPowerModel(format!(
                    "table must be non-decreasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self::Table(values))
    }

    /// Evaluates `w(m_active)`. Exact lookup for tables; tables reject indices
    /// beyond their length, the affine form accepts any count.
    pub fn power(&self, m_active: usize) -> Result<f64, ModelError> {
        match self {
            Self::Affine { base, per_node } => Ok(base + per_node * m_active as f64),
            Self::Table(values) => values
                .get(m_active)
                .copied()
                .ok_or(ModelError::PowerOutOfRange { m_active, max: values.len() - 1 }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, epsilon: f64) -> RouterConfig {
        RouterConfig::new(n, 8, 8, 2.0, 2.0, epsilon).unwrap()
    }

    #[test]
    fn zero_traffic_is_admissible() {
        let spec = TrafficSpec::uniform(2, 0.0, 0.0, 0.0).unwrap();
        let report = spec.validate_admissible(&cfg(2, 0.05)).unwrap();
        assert!(report.is_ok());
        assert_eq!(spec.max_load(), 0.0);
    }

    #[test]
    fn overloaded_output_is_reported() {
        // r_11 = 0.6, r_21 = 0.5: output 0 sums to 1.1 > 0.95.
        let rates = vec![vec![0.6, 0.0], vec![0.5, 0.0]];
        let bursts = vec![vec![0.0; 2]; 2];
        let spec = TrafficSpec::new(rates, bursts, 0.0).unwrap();
        let report = spec.validate_admissible(&cfg(2, 0.05)).unwrap();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            AdmissibilityViolation::OutputRate { output, sum, limit } => {
                assert_eq!(*output, 0);
                assert!((sum - 1.1).abs() < 1e-12);
                assert!((limit - 0.95).abs() < 1e-12);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn uniform_20_at_output_limit_is_admissible() {
        // Row/column sums by direct summation: 20 * (0.95 / 20) = 0.95.
        let spec = TrafficSpec::uniform(20, 0.95, 0.0, 0.0).unwrap();
        let report = spec.validate_admissible(&cfg(20, 0.05)).unwrap();
        assert!(report.is_ok());
        assert!((spec.max_load() - 0.95).abs() < 1e-12);
        let direct: f64 = (0..20).map(|k| spec.rate(3, k)).sum();
        assert!((spec.input_rate(3) - direct).abs() < 1e-12);
    }

    #[test]
    fn max_load_examples() {
        let zero = TrafficSpec::uniform(3, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(zero.max_load(), 0.0);

        let mut rates = vec![vec![0.0; 3]; 3];
        rates[0][0] = 1.0;
        let single = TrafficSpec::new(rates, vec![vec![0.0; 3]; 3], 0.0).unwrap();
        assert_eq!(single.max_load(), 1.0);

        // Rows sum to {0.2, 0.9, 0.4}, columns to {0.5, 0.5, 0.5}.
        let rates = vec![
            vec![0.1, 0.1, 0.0],
            vec![0.3, 0.3, 0.3],
            vec![0.1, 0.1, 0.2],
        ];
        let spec = TrafficSpec::new(rates, vec![vec![0.0; 3]; 3], 0.0).unwrap();
        assert!((spec.max_load() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn max_load_invariant_under_transposition() {
        let rates = vec![
            vec![0.3, 0.05, 0.2],
            vec![0.0, 0.4, 0.1],
            vec![0.25, 0.0, 0.15],
        ];
        let n = rates.len();
        let transposed: Vec<Vec<f64>> =
            (0..n).map(|k| (0..n).map(|i| rates[i][k]).collect()).collect();
        let a = TrafficSpec::new(rates, vec![vec![0.0; n]; n], 0.0).unwrap();
        let b = TrafficSpec::new(transposed, vec![vec![0.0; n]; n], 0.0).unwrap();
        assert_eq!(a.max_load(), b.max_load());
    }

    #[test]
    fn power_examples() {
        let affine = PowerModel::affine(0.0, 1.0).unwrap();
        assert_eq!(affine.power(40).unwrap(), 40.0);
        let shifted = PowerModel::affine(10.0, 2.0).unwrap();
        assert_eq!(shifted.power(0).unwrap(), 10.0);
        let table = PowerModel::table(vec![0.0, 5.0, 9.0, 12.0]).unwrap();
        assert_eq!(table.power(2).unwrap(), 9.0);
        assert!(matches!(
            table.power(7),
            Err(ModelError::PowerOutOfRange { m_active: 7, max: 3 })
        ));
    }

    #[test]
    fn power_tables_must_be_monotone() {
        assert!(PowerModel::table(vec![0.0, 5.0, 4.0]).is_err());
        assert!(PowerModel::affine(-1.0, 1.0).is_err());
        assert!(PowerModel::affine(0.0, -0.5).is_err());
    }

    #[test]
    fn admissible_implies_max_load_at_most_one() {
        let spec = TrafficSpec::uniform(5, 0.93, 0.0, 0.0).unwrap();
        let report = spec.validate_admissible(&cfg(5, 0.05)).unwrap();
        assert!(report.is_ok());
        assert!(spec.max_load() <= 1.0 + ADMISSIBILITY_TOL);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = TrafficSpec::uniform(3, 0.5, 0.0, 0.0).unwrap();
        assert!(matches!(
            spec.validate_admissible(&cfg(2, 0.05)),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(TrafficSpec::new(vec![vec![0.0; 2]; 3], vec![vec![0.0; 3]; 3], 0.0).is_err());
    }
}

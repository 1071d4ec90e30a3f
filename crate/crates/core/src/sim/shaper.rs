//! Token buckets realizing the `(sigma, r)` arrival envelopes.

/// A bucket of depth `sigma` refilled by `rate` tokens per slot. Admission
/// consumes one whole token per packet, so over any window `[s, t)` the
/// admitted count is at most `sigma + rate * (t - s)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TokenBucket {
    tokens: f64,
    rate: f64,
    depth: f64,
}

impl TokenBucket {
    /// Starts full: an initial burst up to the depth is part of the envelope.
    pub fn new(depth: f64, rate: f64) -> Self {
        Self { tokens: depth, rate, depth }
    }

    /// A bucket that can never admit a packet despite carrying traffic:
    /// depth below one token with a positive fill rate.
    pub fn starves(&self) -> bool {
        self.rate > 0.0 && self.depth < 1.0
    }

    pub fn refill(&mut self) {
        self.tokens = (self.tokens + self.rate).min(self.depth);
    }

    pub fn has_token(&self) -> bool {
        self.tokens >= 1.0
    }

    pub fn take(&mut self) {
        debug_assert!(self.tokens >= 1.0);
        self.tokens -= 1.0;
    }
}

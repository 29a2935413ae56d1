//! Mergeable single-pass accumulators for Welch's t-test and Pearson correlation.
//!
//! Both accumulators use the Welford update for single values and the
//! Chan et al. pairwise formula for merges. Results that must be reproducible
//! across worker counts are combined with [`tree_merge`], which always merges
//! adjacent partials in the same binary-tree order.

use serde::{Deserialize, Serialize};

/// |t| at or above this value means the two groups are distinguishable
/// with 99.999% confidence.
pub const THRESHOLD_TVLA: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("non-finite value")]
    NonFinite,
    #[error("need at least two observations per group")]
    InsufficientData,
    #[error("degenerate (zero) variance")]
    DegenerateVariance,
}

/// Count, mean and sum of squared deviations of a stream of values.
///
/// Values are accumulated relative to the first one seen. Telemetry readings
/// sit on a large baseline with tiny data-dependent swings, and working on the
/// offsets keeps those swings from being lost to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentAccumulator {
    n: u64,
    shift: f64,
    dmean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// An accumulator summarising `n` values with the given mean and sum of
    /// squared deviations.
    pub fn from_moments(n: u64, mean: f64, m2: f64) -> Self {
        if n == 0 {
            return Self::default();
        }
        Self {
            n,
            shift: mean,
            dmean: 0.0,
            m2,
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, StatsError> {
        let mut acc = Self::new();
        for &v in values {
            acc.push(v)?;
        }
        Ok(acc)
    }

    pub fn push(&mut self, value: f64) -> Result<(), StatsError> {
        if !value.is_finite() {
            return Err(StatsError::NonFinite);
        }
        if self.n == 0 {
            self.shift = value;
        }
        self.n += 1;
        let x = value - self.shift;
        let delta = x - self.dmean;
        self.dmean += delta / self.n as f64;
        self.m2 += delta * (x - self.dmean);
        Ok(())
    }

    /// Value-style variant of [`push`](Self::push).
    pub fn accumulate(mut self, value: f64) -> Result<Self, StatsError> {
        self.push(value)?;
        Ok(self)
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let n = self.n + other.n;
        let nf = n as f64;
        let (na, nb) = (self.n as f64, other.n as f64);
        let delta = (other.shift - self.shift) + other.dmean - self.dmean;
        Self {
            n,
            shift: self.shift,
            dmean: self.dmean + delta * nb / nf,
            m2: self.m2 + other.m2 + delta * delta * na * nb / nf,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.dmean
    }

    /// Sum of squared deviations from the mean.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }
}

/// Welch's t statistic, positive when `a`'s mean exceeds `b`'s.
pub fn welch_t(a: &MomentAccumulator, b: &MomentAccumulator) -> Result<f64, StatsError> {
    let (Some(va), Some(vb)) = (a.variance(), b.variance()) else {
        return Err(StatsError::InsufficientData);
    };
    let denom = va / a.n as f64 + vb / b.n as f64;
    if denom <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let diff = (a.shift - b.shift) + (a.dmean - b.dmean);
    Ok(diff / denom.sqrt())
}

/// Co-moment accumulator for a stream of `(x, y)` pairs, shifted by the first
/// pair like [`MomentAccumulator`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrAccumulator {
    n: u64,
    shift_x: f64,
    shift_y: f64,
    dmean_x: f64,
    dmean_y: f64,
    m2_x: f64,
    m2_y: f64,
    cxy: f64,
}

impl CorrAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(xs: &[f64], ys: &[f64]) -> Result<Self, StatsError> {
        let mut acc = Self::new();
        for (&x, &y) in xs.iter().zip(ys) {
            acc.push(x, y)?;
        }
        Ok(acc)
    }

    /// A group of observations whose `x` is the constant `x` and whose `y`
    /// moments are `y`. Merging such groups is how CPA folds per-byte-value
    /// buckets into a correlation without revisiting traces.
    pub fn from_constant_x(x: f64, y: &MomentAccumulator) -> Self {
        if y.n == 0 {
            return Self::default();
        }
        Self {
            n: y.n,
            shift_x: x,
            shift_y: y.shift,
            dmean_x: 0.0,
            dmean_y: y.dmean,
            m2_x: 0.0,
            m2_y: y.m2,
            cxy: 0.0,
        }
    }

    pub fn push(&mut self, x: f64, y: f64) -> Result<(), StatsError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(StatsError::NonFinite);
        }
        if self.n == 0 {
            self.shift_x = x;
            self.shift_y = y;
        }
        self.n += 1;
        let n = self.n as f64;
        let (x, y) = (x - self.shift_x, y - self.shift_y);
        let dx = x - self.dmean_x;
        self.dmean_x += dx / n;
        let dy = y - self.dmean_y;
        self.dmean_y += dy / n;
        self.m2_x += dx * (x - self.dmean_x);
        self.m2_y += dy * (y - self.dmean_y);
        self.cxy += dx * (y - self.dmean_y);
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let n = self.n + other.n;
        let nf = n as f64;
        let (na, nb) = (self.n as f64, other.n as f64);
        let dx = (other.shift_x - self.shift_x) + other.dmean_x - self.dmean_x;
        let dy = (other.shift_y - self.shift_y) + other.dmean_y - self.dmean_y;
        let w = na * nb / nf;
        Self {
            n,
            shift_x: self.shift_x,
            shift_y: self.shift_y,
            dmean_x: self.dmean_x + dx * nb / nf,
            dmean_y: self.dmean_y + dy * nb / nf,
            m2_x: self.m2_x + other.m2_x + dx * dx * w,
            m2_y: self.m2_y + other.m2_y + dy * dy * w,
            cxy: self.cxy + other.cxy + dx * dy * w,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean_x(&self) -> f64 {
        self.shift_x + self.dmean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.shift_y + self.dmean_y
    }
}

/// Pearson's r, clamped to [-1, 1].
pub fn pearson(acc: &CorrAccumulator) -> Result<f64, StatsError> {
    if acc.n < 2 {
        return Err(StatsError::InsufficientData);
    }
    if acc.m2_x <= 0.0 || acc.m2_y <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let r = acc.cxy / (acc.m2_x * acc.m2_y).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

/// Merges partials pairwise, left to right, level by level:
/// `[a, b, c, d, e] -> [ab, cd, e] -> [abcd, e] -> [abcde]`.
/// Returns `None` for an empty input.
pub fn tree_merge<T, F>(mut items: Vec<T>, merge: F) -> Option<T>
where
    F: Fn(&T, &T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(&a, &b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.into_iter().next()
}

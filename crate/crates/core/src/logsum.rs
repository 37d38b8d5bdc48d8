//! Log-space values and numerically stable summation. Partition functions
//! span hundreds of orders of magnitude, so everything is carried as a
//! natural logarithm and sums are accumulated with a compensated
//! shift-and-add.

use serde::{Deserialize, Serialize};

/// A nonnegative quantity stored as its natural logarithm.
/// `LogValue::ZERO` (log = -inf) represents an exact zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    pub fn from_ln(ln: f64) -> LogValue {
        debug_assert!(!ln.is_nan());
        LogValue(ln)
    }

    pub fn from_value(v: f64) -> LogValue {
        debug_assert!(v >= 0.0);
        LogValue(v.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powi(self, k: i64) -> LogValue {
        if self.is_zero() && k == 0 {
            return LogValue::ONE;
        }
        LogValue(self.0 * k as f64)
    }

    pub fn recip(self) -> LogValue {
        LogValue(-self.0)
    }
}

impl std::ops::Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 + rhs.0)
    }
}

impl std::ops::MulAssign for LogValue {
    fn mul_assign(&mut self, rhs: LogValue) {
        *self = *self * rhs;
    }
}

impl std::ops::Div for LogValue {
    type Output = LogValue;
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero(), "division by log-space zero");
        if self.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 - rhs.0)
    }
}

impl std::ops::Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        let mut acc = LogSum::new();
        acc.add(self);
        acc.add(rhs);
        acc.total()
    }
}

/// Streaming log-sum-exp accumulator: keeps a running maximum and a
/// Kahan-compensated sum of rescaled terms.
#[derive(Clone, Debug)]
pub struct LogSum {
    max: f64,
    sum: f64,
    comp: f64,
    count: u64,
}

impl LogSum {
    pub fn new() -> LogSum {
        LogSum { max: f64::NEG_INFINITY, sum: 0.0, comp: 0.0, count: 0 }
    }

    pub fn add(&mut self, v: LogValue) {
        self.add_ln(v.ln());
    }

    pub fn add_ln(&mut self, ln: f64) {
        if ln == f64::NEG_INFINITY {
            return;
        }
        self.count += 1;
        if ln > self.max {
            let scale = (self.max - ln).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = ln;
        }
        let term = (ln - self.max).exp();
        // Kahan step.
        let y = term - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    /// Merge another accumulator (deterministic given operand order).
    pub fn merge(&mut self, other: &LogSum) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let m = self.max.max(other.max);
        let a = self.sum * (self.max - m).exp();
        let b = other.sum * (other.max - m).exp();
        self.max = m;
        self.sum = a + b;
        self.comp = 0.0;
        self.count += other.count;
    }

    pub fn total(&self) -> LogValue {
        if self.count == 0 || self.sum <= 0.0 {
            return LogValue::ZERO;
        }
        LogValue::from_ln(self.max + self.sum.ln())
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum::new()
    }
}

/// Log-sum-exp of a slice, summing in ascending order under the true
/// maximum. Used where the full term list is small enough to materialize.
pub fn log_sum_exp_sorted(terms: &[f64]) -> LogValue {
    let mut finite: Vec<f64> = terms.iter().copied().filter(|t| *t != f64::NEG_INFINITY).collect();
    if finite.is_empty() {
        return LogValue::ZERO;
    }
    finite.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let max = *finite.last().unwrap();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in &finite {
        let y = (t - max).exp() - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    LogValue::from_ln(max + sum.ln())
}

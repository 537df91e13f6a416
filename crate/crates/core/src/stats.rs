//! Calibration statistics: count, mean, standard deviation and peak magnitude.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Summary statistics of one tensor (or one activation site across a
/// calibration set). `std_dev` is the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorStats {
    pub count: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub max_abs: f64,
}

impl TensorStats {
    pub fn new(count: u64, mean: f64, std_dev: f64, max_abs: f64) -> Result<Self> {
        let ok = count >= 1
            && mean.is_finite()
            && std_dev.is_finite()
            && max_abs.is_finite()
            && std_dev >= 0.0
            && max_abs >= 0.0
            && mean.abs() <= max_abs * (1.0 + 1e-12);
        if !ok {
            return Err(Error::Input(alloc::format!(
                "invalid stats: count={count} mean={mean} std_dev={std_dev} max_abs={max_abs}"
            )));
        }
        Ok(TensorStats {
            count,
            mean,
            std_dev,
            max_abs,
        })
    }

    pub fn from_values(values: &[f32]) -> Result<Self> {
        let mut acc = RunningStats::default();
        acc.extend_f32(values);
        acc.finish()
    }
}

/// Streaming mean/variance accumulator (Welford), mergeable so partial
/// results over disjoint batches can be combined in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
    max_abs: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        let a = x.abs();
        if a > self.max_abs {
            self.max_abs = a;
        }
    }

    pub fn extend_f32(&mut self, values: &[f32]) {
        for &v in values {
            self.push(v as f64);
        }
    }

    pub fn extend(&mut self, values: &[f64]) {
        for &v in values {
            self.push(v);
        }
    }

    /// Combine with the statistics of a disjoint sample.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
        self.max_abs = self.max_abs.max(other.max_abs);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Result<TensorStats> {
        if self.count == 0 {
            return Err(Error::Input("no samples accumulated".into()));
        }
        let var = (self.m2 / self.count as f64).max(0.0);
        // guard against rounding pushing |mean| past the observed peak
        let mean = self.mean.clamp(-self.max_abs, self.max_abs);
        TensorStats::new(self.count, mean, var.sqrt(), self.max_abs)
    }
}

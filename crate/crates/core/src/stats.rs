//! Streaming estimators for time averages of (possibly correlated) samples.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BATCHES: usize = 32;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, std_err: 0.0 }
    }

    /// `|self - target| <= k * std_err`, with a tiny absolute slack so that
    /// exact estimates compare equal to exact targets.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err + 1e-12 * target.abs().max(1.0)
    }
}

/// Welford accumulator for i.i.d. samples.
#[derive(Debug, Clone, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn estimate(&self) -> Estimate {
        let std_err = if self.count < 2 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        };
        Estimate {
            mean: self.mean,
            std_err,
        }
    }
}

/// Non-overlapping batch means over a run of known length. Sample `k` goes to
/// batch `floor(k * batches / total)`, so batch sizes differ by at most one.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    total: u64,
    seen: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    neg_inf: u64,
    iid: Welford,
}

impl BatchMeans {
    pub fn new(total: u64, batches: usize) -> Self {
        let batches = batches.max(1);
        Self {
            total: total.max(1),
            seen: 0,
            sums: vec![0.0; batches],
            counts: vec![0; batches],
            neg_inf: 0,
            iid: Welford::default(),
        }
    }

    pub fn push(&mut self, x: f64) {
        let batches = self.sums.len() as u128;
        let b = ((self.seen as u128 * batches) / self.total as u128).min(batches - 1) as usize;
        self.seen += 1;
        if x == f64::NEG_INFINITY {
            self.neg_inf += 1;
            return;
        }
        self.sums[b] += x;
        self.counts[b] += 1;
        self.iid.push(x);
    }

    pub fn count(&self) -> u64 {
        self.seen
    }

    /// Samples that were `-inf`.
    pub fn neg_inf_count(&self) -> u64 {
        self.neg_inf
    }

    pub fn estimate(&self) -> Estimate {
        if self.neg_inf > 0 {
            return Estimate {
                mean: f64::NEG_INFINITY,
                std_err: f64::NAN,
            };
        }
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, c)| **c > 0)
            .map(|(s, c)| s / *c as f64)
            .collect();
        let mean = self.iid.mean();
        if means.len() < 2 {
            return self.iid.estimate();
        }
        let k = means.len() as f64;
        let grand = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
        Estimate {
            mean,
            std_err: (var / k).sqrt(),
        }
    }
}

/// Standard error of the mean of `xs` assuming independence.
pub fn iid_estimate(xs: &[f64]) -> Estimate {
    let mut w = Welford::default();
    for x in xs {
        w.push(*x);
    }
    w.estimate()
}

//! Monte Carlo estimates and the replica driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// A Monte Carlo value with its standard error and sample count.
///
/// Exact values carry `stderr = 0` and `n = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: usize) -> Self {
        Estimate { value, stderr, n }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n: 0 }
    }

    pub fn is_exact(&self) -> bool {
        self.n == 0 && self.stderr == 0.0
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        for &s in samples {
            acc.push(s);
        }
        acc.estimate()
    }

    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// Standardised difference; infinite when both are exact and differ.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let d = (self.value - other.value).abs();
        let s = self.combined_stderr(other);
        if s > 0.0 {
            d / s
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// `|self - other| <= k * combined stderr + abs_tol`.
    pub fn agrees_with(&self, other: &Estimate, k: f64, abs_tol: f64) -> bool {
        (self.value - other.value).abs() <= k * self.combined_stderr(other) + abs_tol
    }
}

/// Welford accumulator with Chan's merge, reduced in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate::new(self.mean, se, self.n)
    }
}

/// Monte Carlo parameters shared by the stochastic operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McParams {
    /// Number of replicas (outer samples).
    pub samples: usize,
    /// Multiplier `c` in the terminal-kernel bandwidth `h = c * sigma * n^(-1/5)`.
    pub bandwidth_scale: f64,
    /// Minimum effective sample size, as a fraction of `samples`.
    pub ess_threshold: f64,
    /// Replicas per random stream; fixes the reduction order.
    pub block_size: usize,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            samples: 10_000,
            bandwidth_scale: 1.0,
            ess_threshold: 0.01,
            block_size: 256,
        }
    }
}

impl McParams {
    pub fn with_samples(samples: usize) -> Self {
        McParams {
            samples,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::setup("mc.samples must be at least 2"));
        }
        if self.block_size == 0 {
            return Err(Error::setup("mc.block_size must be positive"));
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return Err(Error::setup("mc.bandwidth_scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::setup("mc.ess_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Runs `per_sample` for `n` replicas split into blocks of `block` replicas.
///
/// Block `b` draws from `stream(seed, purpose, b)`, so the output order and
/// values do not depend on the number of worker threads.
pub fn replicas<T, F>(n: usize, block: usize, seed: u64, purpose: &str, per_sample: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    let block = block.max(1);
    let blocks = n.div_ceil(block);
    let chunks: Vec<Result<Vec<T>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, purpose, b as u64);
            let len = block.min(n - b * block);
            (0..len).map(|_| per_sample(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Self-normalised importance estimate from `(log weight, value)` pairs.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEstimate {
    pub estimate: Estimate,
    pub ess: f64,
}

pub fn self_normalized(pairs: &[(f64, f64)]) -> WeightedEstimate {
    let shift = pairs
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return WeightedEstimate {
            estimate: Estimate::new(f64::NAN, f64::NAN, pairs.len()),
            ess: 0.0,
        };
    }
    let (mut sw, mut sw2, mut swf) = (0.0, 0.0, 0.0);
    for &(lw, f) in pairs {
        let w = (lw - shift).exp();
        sw += w;
        sw2 += w * w;
        swf += w * f;
    }
    let mean = swf / sw;
    let mut var_num = 0.0;
    for &(lw, f) in pairs {
        let w = (lw - shift).exp();
        var_num += w * w * (f - mean) * (f - mean);
    }
    WeightedEstimate {
        estimate: Estimate::new(mean, var_num.sqrt() / sw, pairs.len()),
        ess: sw * sw / sw2,
    }
}

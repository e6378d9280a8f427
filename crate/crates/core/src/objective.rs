//! Mixing-quality score computed from energy traces.
//!
//! `r(l)` is the lag-`l` autocorrelation with the sample mean and population
//! variance of the whole sequence. The area score
//! `a(l_max) = 1 - mean_{l=1..l_max} |r(l)|` is large for fast-mixing chains.
//! The performance criterion averages `a(i, E_i)` over the suffixes `E_i` of
//! the last `L` energies, `i = 25..=L`.
//!
//! Conventions: a constant sequence has `r(l) = 1` for every lag (a stuck
//! chain scores 0); lags at or beyond the sequence length contribute `r = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest suffix window used by [`performance_criterion`].
pub const MIN_WINDOW: usize = 25;

/// Non-empty sequence of finite energies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace(Vec<f64>);

impl EnergyTrace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TraceTooShort { min: 1, got: 0 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("energy at index {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The last `len` values as a new trace.
    pub fn suffix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.0.len() {
            return Err(Error::InvalidArgument(format!("suffix length {len} outside 1..={}", self.0.len())));
        }
        Ok(Self(self.0[self.0.len() - len..].to_vec()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScore {
    pub value: f64,
    pub window_len: usize,
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn mean_and_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Autocorrelations for lags `0..=max_lag`, sharing one mean/variance pass.
pub fn autocorr_curve(trace: &EnergyTrace, max_lag: usize) -> Vec<f64> {
    let x = trace.values();
    let n = x.len();
    if is_constant(x) {
        return vec![1.0; max_lag + 1];
    }
    let (mean, var) = mean_and_variance(x);
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            if lag == 0 {
                return 1.0;
            }
            let s: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
            s / ((n - lag) as f64 * var)
        })
        .collect()
}

/// Lag-`lag` autocorrelation of the trace.
pub fn autocorr(trace: &EnergyTrace, lag: usize) -> f64 {
    let x = trace.values();
    if is_constant(x) {
        return 1.0;
    }
    if lag >= x.len() {
        return 0.0;
    }
    if lag == 0 {
        return 1.0;
    }
    let n = x.len();
    let (mean, var) = mean_and_variance(x);
    let s: f64 = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - mean) * (b - mean)).sum();
    s / ((n - lag) as f64 * var)
}

/// `1 - (1/l_max) sum_{l=1..=l_max} |r(l)|`.
pub fn acf_area_score(trace: &EnergyTrace, l_max: usize) -> Result<f64> {
    if l_max < 1 {
        return Err(Error::InvalidArgument("l_max must be at least 1".into()));
    }
    let curve = autocorr_curve(trace, l_max);
    let total: f64 = curve[1..].iter().map(|r| r.abs()).sum();
    Ok(1.0 - total / l_max as f64)
}

/// Mean of `a(i, E_i)` over the suffix windows `i = 25..=L` of the trace,
/// where `L` is the trace length.
///
/// Runs in O(L^2): suffixes are grown one element at a time while lagged
/// cross-products are accumulated, and each window's centred sums are
/// recovered from prefix sums.
pub fn performance_criterion(trace: &EnergyTrace) -> Result<ObjectiveScore> {
    let x = trace.values();
    let len = x.len();
    if len < MIN_WINDOW {
        return Err(Error::TraceTooShort { min: MIN_WINDOW, got: len });
    }
    // Centre on the global mean first to limit cancellation.
    let global = x.iter().sum::<f64>() / len as f64;
    let y: Vec<f64> = x.iter().map(|v| v - global).collect();
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    for v in &y {
        prefix.push(prefix.last().unwrap() + v);
    }

    // cross[l] = sum_{t=s}^{len-1-l} y_t y_{t+l} for the current start s.
    let mut cross = vec![0.0; len];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut total = 0.0;
    for start in (0..len).rev() {
        let ys = y[start];
        for (c, yt) in cross.iter_mut().zip(&y[start..]) {
            *c += ys * yt;
        }
        lo = lo.min(x[start]);
        hi = hi.max(x[start]);
        let n = len - start;
        if n < MIN_WINDOW {
            continue;
        }
        if lo == hi {
            // stuck window: every |r| is 1, so a = 0
            continue;
        }
        let nf = n as f64;
        let sum = prefix[len] - prefix[start];
        let m = sum / nf;
        let var = cross[0] / nf - m * m;
        let mut abs_sum = 0.0;
        for lag in 1..n {
            let head = prefix[len - lag] - prefix[start];
            let tail = prefix[len] - prefix[start + lag];
            let cnt = (n - lag) as f64;
            let cov = cross[lag] - m * (head + tail) + cnt * m * m;
            abs_sum += (cov / (cnt * var)).abs();
        }
        total += 1.0 - abs_sum / nf;
    }
    Ok(ObjectiveScore { value: total / (len - MIN_WINDOW + 1) as f64, window_len: len })
}

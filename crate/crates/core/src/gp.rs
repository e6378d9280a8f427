//! Zero-mean Gaussian-process surrogate with an ARD squared-exponential
//! kernel and Gaussian observation noise.
//!
//! All locations live in the unit hypercube. The posterior is held as the
//! Cholesky factor of `K + sigma^2 I` together with `alpha = (K + sigma^2 I)^-1 z`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::ChainRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal jitter schedule used when the plain factorization fails.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    locations: Vec<Vec<f64>>,
    observations: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self { dim, locations: Vec::new(), observations: Vec::new() }
    }

    pub fn from_parts(dim: usize, locations: Vec<Vec<f64>>, observations: Vec<f64>) -> Result<Self> {
        if locations.len() != observations.len() {
            return Err(Error::Dimension { expected: locations.len(), got: observations.len() });
        }
        let mut data = Self::new(dim);
        for (x, z) in locations.into_iter().zip(observations) {
            data.push(x, z)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, location: Vec<f64>, observation: f64) -> Result<()> {
        check_point(&location, self.dim)?;
        if !observation.is_finite() {
            return Err(Error::InvalidArgument("observation must be finite".into()));
        }
        self.locations.push(location);
        self.observations.push(observation);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn best(&self) -> Option<f64> {
        self.observations.iter().copied().reduce(f64::max)
    }
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Dimension { expected: dim, got: x.len() });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(format!("point {x:?} outside the unit hypercube")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lengthscales: Vec<f64>,
    pub noise_std: f64,
}

impl Hyperparams {
    /// Values used until there is enough data to fit.
    pub fn defaults(dim: usize) -> Self {
        Self { lengthscales: vec![0.3; dim], noise_std: 0.1 }
    }
}

/// Box constraints for hyperparameter fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub noise_std: (f64, f64),
    pub restarts: usize,
    pub evals_per_restart: usize,
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self { lengthscale: (0.01, 10.0), noise_std: (1e-4, 1.0), restarts: 10, evals_per_restart: 200 }
    }
}

impl HyperBounds {
    pub fn contains(&self, h: &Hyperparams) -> bool {
        let (lo, hi) = self.lengthscale;
        h.lengthscales.iter().all(|l| (lo..=hi).contains(l)) && (self.noise_std.0..=self.noise_std.1).contains(&h.noise_std)
    }
}

/// ARD squared-exponential covariance `exp(-0.5 (a-b)^T diag(psi)^-2 (a-b))`.
pub fn kernel(a: &[f64], b: &[f64], hyper: &Hyperparams) -> Result<f64> {
    let d = hyper.lengthscales.len();
    if a.len() != d || b.len() != d {
        return Err(Error::Dimension { expected: d, got: if a.len() != d { a.len() } else { b.len() } });
    }
    Ok(kernel_unchecked(a, b, &hyper.lengthscales))
}

#[inline]
fn kernel_unchecked(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    let q: f64 = a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    (-0.5 * q).exp()
}

/// Dense lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s.is_nan() || s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Solves `L y = b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves `L^T x = y`.
    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }
}

fn gram(data: &Dataset, hyper: &Hyperparams) -> Vec<f64> {
    let n = data.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_unchecked(&data.locations[i], &data.locations[j], &hyper.lengthscales);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += hyper.noise_std * hyper.noise_std;
    }
    k
}

fn factorize(data: &Dataset, hyper: &Hyperparams) -> Result<(Cholesky, f64)> {
    let n = data.len();
    let base = gram(data, hyper);
    if let Some(c) = Cholesky::factor(&base, n) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START;
    loop {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        if let Some(c) = Cholesky::factor(&a, n) {
            return Ok((c, jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::Numerical(format!("covariance of {n} points not positive definite with jitter {jitter:e}")));
        }
        jitter *= 10.0;
    }
}

fn check_hyper(dim: usize, hyper: &Hyperparams) -> Result<()> {
    if hyper.lengthscales.len() != dim {
        return Err(Error::Dimension { expected: dim, got: hyper.lengthscales.len() });
    }
    if hyper.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) || !(hyper.noise_std > 0.0 && hyper.noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!("hyperparameters must be positive and finite: {hyper:?}")));
    }
    Ok(())
}

/// Fitted posterior; immutable once built.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    data: Dataset,
    hyper: Hyperparams,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn fit(data: Dataset, hyper: Hyperparams) -> Result<Self> {
        check_hyper(data.dim(), &hyper)?;
        let (chol, jitter) = factorize(&data, &hyper)?;
        let alpha = chol.backward(&chol.forward(&data.observations));
        Ok(Self { data, hyper, chol, alpha, jitter })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower Cholesky factor of `K + sigma^2 I` (row-major, `n x n`).
    pub fn chol_factor(&self) -> &[f64] {
        &self.chol.l
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Predictive mean and variance at `theta`. Variance is clamped at 0.
    pub fn predict(&self, theta: &[f64]) -> Result<(f64, f64)> {
        check_point(theta, self.data.dim())?;
        Ok(self.predict_unchecked(theta))
    }

    pub(crate) fn predict_unchecked(&self, theta: &[f64]) -> (f64, f64) {
        let kv: Vec<f64> = self.data.locations.iter().map(|x| kernel_unchecked(theta, x, &self.hyper.lengthscales)).collect();
        let mean = kv.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.forward(&kv);
        let var = 1.0 - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Predictive mean only; O(n).
    pub fn mean(&self, theta: &[f64]) -> Result<f64> {
        check_point(theta, self.data.dim())?;
        Ok(self.data.locations.iter().zip(&self.alpha).map(|(x, a)| a * kernel_unchecked(theta, x, &self.hyper.lengthscales)).sum())
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.data.len() as f64;
        let fit: f64 = self.data.observations.iter().zip(&self.alpha).map(|(z, a)| z * a).sum();
        -0.5 * fit - 0.5 * self.chol.log_det() - 0.5 * n * LN_2PI
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            locations: self.data.locations.clone(),
            observations: self.data.observations.clone(),
            lengthscales: self.hyper.lengthscales.clone(),
            noise_std: self.hyper.noise_std,
        }
    }
}

/// `-1/2 z^T (K + sigma^2 I)^-1 z - 1/2 log det(K + sigma^2 I) - n/2 log 2 pi`.
pub fn log_marginal_likelihood(data: &Dataset, hyper: &Hyperparams) -> Result<f64> {
    Ok(GpPosterior::fit(data.clone(), hyper.clone())?.log_marginal_likelihood())
}

/// Serializable view of a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub locations: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub noise_std: f64,
}

impl GpSnapshot {
    pub fn to_posterior(&self) -> Result<GpPosterior> {
        let dim = self.lengthscales.len();
        let data = Dataset::from_parts(dim, self.locations.clone(), self.observations.clone())?;
        GpPosterior::fit(data, Hyperparams { lengthscales: self.lengthscales.clone(), noise_std: self.noise_std })
    }
}

/// Maximizes the log marginal likelihood over log-lengthscales and log-noise
/// by multi-start coordinate search with adaptive steps. Returns the
/// defaults when there are fewer than `d + 2` observations or every start
/// fails.
pub fn fit_hyperparams(data: &Dataset, bounds: &HyperBounds, rng: &mut ChainRng) -> Hyperparams {
    let d = data.dim();
    let defaults = Hyperparams::defaults(d);
    if data.len() < d + 2 {
        return defaults;
    }
    let lo: Vec<f64> = (0..d).map(|_| bounds.lengthscale.0.ln()).chain([bounds.noise_std.0.ln()]).collect();
    let hi: Vec<f64> = (0..d).map(|_| bounds.lengthscale.1.ln()).chain([bounds.noise_std.1.ln()]).collect();
    let to_hyper = |p: &[f64]| Hyperparams { lengthscales: p[..d].iter().map(|v| v.exp()).collect(), noise_std: p[d].exp() };
    let objective = |p: &[f64]| log_marginal_likelihood(data, &to_hyper(p)).unwrap_or(f64::NEG_INFINITY);

    let mut best_p: Option<Vec<f64>> = None;
    let mut best_v = f64::NEG_INFINITY;
    for restart in 0..bounds.restarts.max(1) {
        let mut p: Vec<f64> = if restart == 0 {
            defaults.lengthscales.iter().map(|l| l.ln()).chain([defaults.noise_std.ln()]).zip(lo.iter().zip(&hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect()
        } else {
            lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect()
        };
        let mut v = objective(&p);
        let mut evals = 1;
        let mut steps = vec![0.5; d + 1];
        'search: while evals < bounds.evals_per_restart {
            let mut moved = false;
            for c in 0..=d {
                for dir in [1.0, -1.0] {
                    if evals >= bounds.evals_per_restart {
                        break 'search;
                    }
                    let mut q = p.clone();
                    q[c] = (q[c] + dir * steps[c]).clamp(lo[c], hi[c]);
                    if q[c] == p[c] {
                        continue;
                    }
                    let qv = objective(&q);
                    evals += 1;
                    if qv > v {
                        p = q;
                        v = qv;
                        steps[c] = (steps[c] * 2.0).min(2.0);
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    steps[c] *= 0.5;
                }
            }
            if steps.iter().all(|s| *s < 1e-6) {
                break;
            }
        }
        if v > best_v {
            best_v = v;
            best_p = Some(p);
        }
    }
    best_p.map_or(defaults, |p| to_hyper(&p))
}

/// `count` points in `[0,1]^dim` with exactly one point in each of the
/// `count` equal-width bins of every coordinate.
pub fn latin_hypercube(count: usize, dim: usize, rng: &mut ChainRng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; count];
    let mut bins: Vec<usize> = (0..count).collect();
    for j in 0..dim {
        bins.shuffle(rng);
        for (p, &b) in points.iter_mut().zip(&bins) {
            p[j] = (b as f64 + rng.random::<f64>()) / count as f64;
        }
    }
    points
}

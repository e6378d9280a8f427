//! Sampling phase: a randomized policy over IM parameters and the mixture
//! kernel it induces.
//!
//! The Boltzmann policy puts weight `∝ exp(mu(theta))` on every point of a
//! `k x gamma` grid covering the parameter box, where `mu` is the GP
//! posterior mean. `M` settings are drawn from it once; each chain step then
//! applies an IM step with one of the `M` settings chosen uniformly.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::model::{BitState, BoltzmannModel, ConstraintSpec};
use crate::rng::ChainRng;
use crate::samplers::{im_step, ParamBox, SamplerParams, StepInfo, TransitionKernel};

pub const DEFAULT_GRID_GAMMA: usize = 100;
pub const DEFAULT_NUM_DRAWS: usize = 1000;

/// `count` equally spaced values spanning `[0, gamma_max]`.
pub fn gamma_grid(gamma_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|j| gamma_max * j as f64 / (count - 1) as f64).collect(),
    }
}

/// Full `{1..k_max} x gamma_grid` support, k-major.
pub fn box_support(pbox: &ParamBox, grid_gamma: usize) -> Vec<SamplerParams> {
    let gammas = gamma_grid(pbox.gamma_max, grid_gamma);
    (1..=pbox.k_max)
        .flat_map(|k| gammas.iter().map(move |&g| SamplerParams { saw_length: k, energy_bias: g }))
        .collect()
}

fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Support and weights `∝ exp(mu(theta))` over the box grid.
pub fn build_boltzmann_policy(gp: &GpPosterior, pbox: &ParamBox, grid_gamma: usize) -> Result<(Vec<SamplerParams>, Vec<f64>)> {
    if grid_gamma < 1 {
        return Err(Error::InvalidArgument("gamma grid needs at least one point".into()));
    }
    let support = box_support(pbox, grid_gamma);
    let log_w = support.iter().map(|p| gp.mean(&pbox.normalize(p))).collect::<Result<Vec<_>>>()?;
    let weights = normalize_log_weights(&log_w);
    Ok((support, weights))
}

/// Uniform weights over the box grid.
pub fn uniform_policy(pbox: &ParamBox, grid_gamma: usize) -> (Vec<SamplerParams>, Vec<f64>) {
    let support = box_support(pbox, grid_gamma);
    let w = 1.0 / support.len() as f64;
    let weights = vec![w; support.len()];
    (support, weights)
}

/// Fixed `gamma` with `k` uniform on `k_min..=k_max`.
pub fn fixed_gamma_policy(k_min: usize, k_max: usize, gamma: f64) -> Result<(Vec<SamplerParams>, Vec<f64>)> {
    if k_min < 1 || k_min > k_max {
        return Err(Error::InvalidArgument(format!("invalid k range {k_min}..={k_max}")));
    }
    let support = (k_min..=k_max).map(|k| SamplerParams::new(k, gamma)).collect::<Result<Vec<_>>>()?;
    let w = 1.0 / support.len() as f64;
    let weights = vec![w; support.len()];
    Ok((support, weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    support: Vec<SamplerParams>,
    weights: Vec<f64>,
    draws: Vec<SamplerParams>,
}

fn check_distribution(support: &[SamplerParams], weights: &[f64]) -> Result<()> {
    if support.is_empty() || support.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "policy support ({}) and weights ({}) must be non-empty and equal length",
            support.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("policy weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("policy weights sum to {total}")));
    }
    Ok(())
}

/// `m` i.i.d. draws by inverse CDF over the cumulative weights.
pub fn draw_policy(support: Vec<SamplerParams>, weights: Vec<f64>, m: usize, rng: &mut ChainRng) -> Result<MixturePolicy> {
    if m < 1 {
        return Err(Error::InvalidArgument("policy needs at least one draw".into()));
    }
    check_distribution(&support, &weights)?;
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cdf.push(acc);
    }
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1);
    let draws = (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|c| *c <= u).min(last_positive);
            support[idx]
        })
        .collect();
    Ok(MixturePolicy { support, weights, draws })
}

impl MixturePolicy {
    /// Every draw is `params`.
    pub fn point_mass(params: SamplerParams) -> Self {
        Self { support: vec![params], weights: vec![1.0], draws: vec![params] }
    }

    pub fn support(&self) -> &[SamplerParams] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draws(&self) -> &[SamplerParams] {
        &self.draws
    }

    /// Checks every draw against the walk-length limit of the constraint.
    pub fn validate_for(&self, spec: &ConstraintSpec) -> Result<()> {
        let max = spec.max_walk_length();
        if let Some(p) = self.draws.iter().find(|p| p.saw_length > max) {
            return Err(Error::InfeasibleWalk { k: p.saw_length, max });
        }
        Ok(())
    }

    /// CSV `k,gamma,weight` over the full support.
    pub fn grid_csv(&self) -> String {
        let mut s = String::from("k,gamma,weight\n");
        for (p, w) in self.support.iter().zip(&self.weights) {
            s.push_str(&format!("{},{},{}\n", p.saw_length, p.energy_bias, w));
        }
        s
    }

    /// CSV `draw,k,gamma` listing the M drawn settings.
    pub fn draws_csv(&self) -> String {
        let mut s = String::from("draw,k,gamma\n");
        for (i, p) in self.draws.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i, p.saw_length, p.energy_bias));
        }
        s
    }

    /// Parses a `k,gamma,weight` grid CSV back into a support and weights.
    pub fn parse_grid_csv(text: &str) -> Result<(Vec<SamplerParams>, Vec<f64>)> {
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("policy csv line {}: expected k,gamma,weight", lineno + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            let k: usize = cols[0].parse().map_err(|_| bad())?;
            let g: f64 = cols[1].parse().map_err(|_| bad())?;
            let w: f64 = cols[2].parse().map_err(|_| bad())?;
            support.push(SamplerParams::new(k, g)?);
            weights.push(w);
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Config("policy csv has no positive weight".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok((support, weights))
    }
}

impl TransitionKernel for MixturePolicy {
    fn step(&self, model: &BoltzmannModel, spec: &ConstraintSpec, state: &mut BitState, rng: &mut ChainRng) -> Result<StepInfo> {
        let params = self.draws[rng.random_range(0..self.draws.len())];
        let accepted = im_step(model, spec, state, &params, rng)?;
        Ok(StepInfo { accepted, params })
    }
}

/// Per-step record of a sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub energy: f64,
    pub accepted: bool,
    pub params: SamplerParams,
}

#[derive(Debug, Clone)]
pub struct SamplingOutcome {
    pub steps: Vec<StepRecord>,
    pub final_state: BitState,
}

impl SamplingOutcome {
    pub fn energies(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.energy).collect()
    }

    pub fn accept_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.accepted).count() as f64 / self.steps.len() as f64
    }

    /// CSV `step,energy,accepted,k_used,gamma_used`.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(32 * self.steps.len() + 64);
        s.push_str("step,energy,accepted,k_used,gamma_used\n");
        for (i, r) in self.steps.iter().enumerate() {
            s.push_str(&format!("{},{},{},{},{}\n", i, r.energy, r.accepted as u8, r.params.saw_length, r.params.energy_bias));
        }
        s
    }
}

/// Runs `num_steps` mixture-kernel steps, recording the energy after each
/// step whether or not the move was accepted.
pub fn sampling_phase(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    policy: &MixturePolicy,
    initial_state: BitState,
    num_steps: usize,
    rng: &mut ChainRng,
) -> Result<SamplingOutcome> {
    policy.validate_for(spec)?;
    let mut state = initial_state;
    let mut steps = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let info = policy.step(model, spec, &mut state, rng)?;
        steps.push(StepRecord { energy: state.energy(), accepted: info.accepted, params: info.params });
    }
    Ok(SamplingOutcome { steps, final_state: state })
}

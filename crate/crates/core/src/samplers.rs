//! Metropolis-Hastings kernels on the constrained space: the Kawasaki
//! exchange baseline and the Intracluster-Move (IM) sampler.
//!
//! The IM proposal is a self-avoiding walk of `k` exchanges. Each exchange
//! first moves one displaced site back to its reference value, then moves one
//! matching site away from it. At every stage the site is chosen among the
//! sites not yet touched by the walk with probability proportional to
//! `exp(gamma * E(x'))`, where `x'` is the state after that single flip. With
//! `k = 1, gamma = 0` the proposal is uniform over all exchanges, i.e. the
//! Kawasaki proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BitState, BoltzmannModel, ConstraintSpec};
use crate::rng::ChainRng;

/// IM parameters `(k, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub saw_length: usize,
    pub energy_bias: f64,
}

impl SamplerParams {
    pub const KAWASAKI: SamplerParams = SamplerParams { saw_length: 1, energy_bias: 0.0 };

    pub fn new(saw_length: usize, energy_bias: f64) -> Result<Self> {
        if saw_length == 0 {
            return Err(Error::InvalidArgument("walk length must be at least 1".into()));
        }
        if !(energy_bias >= 0.0 && energy_bias.is_finite()) {
            return Err(Error::InvalidArgument(format!("energy bias must be finite and >= 0, got {energy_bias}")));
        }
        Ok(Self { saw_length, energy_bias })
    }
}

/// Parameter box `{1..k_max} x [0, gamma_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub k_max: usize,
    pub gamma_max: f64,
}

impl ParamBox {
    pub fn new(k_max: usize, gamma_max: f64) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        if !(gamma_max > 0.0 && gamma_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma_max must be positive, got {gamma_max}")));
        }
        Ok(Self { k_max, gamma_max })
    }

    pub fn contains(&self, p: &SamplerParams) -> bool {
        (1..=self.k_max).contains(&p.saw_length) && (0.0..=self.gamma_max).contains(&p.energy_bias)
    }

    /// Maps parameters to the unit square.
    pub fn normalize(&self, p: &SamplerParams) -> [f64; 2] {
        let k = if self.k_max > 1 { (p.saw_length - 1) as f64 / (self.k_max - 1) as f64 } else { 0.0 };
        [k, p.energy_bias / self.gamma_max]
    }

    /// Inverse of [`normalize`](Self::normalize); `k` is rounded to the
    /// nearest admissible integer and both coordinates are clamped.
    pub fn denormalize(&self, u: &[f64]) -> SamplerParams {
        let uk = u[0].clamp(0.0, 1.0);
        let ug = u[1].clamp(0.0, 1.0);
        let k = 1 + (uk * (self.k_max - 1) as f64).round() as usize;
        SamplerParams { saw_length: k.min(self.k_max), energy_bias: ug * self.gamma_max }
    }
}

/// One exchange of a walk: the site returned to its reference value and the
/// site moved away from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exchange {
    pub down_site: usize,
    pub up_site: usize,
}

#[derive(Debug, Clone)]
pub struct ProposalOutcome {
    pub proposal: BitState,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
    pub walk: Vec<Exchange>,
}

/// Result of a single kernel application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    pub params: SamplerParams,
}

/// A Markov kernel on the constrained space that updates `state` in place.
pub trait TransitionKernel {
    fn step(
        &self,
        model: &BoltzmannModel,
        spec: &ConstraintSpec,
        state: &mut BitState,
        rng: &mut ChainRng,
    ) -> Result<StepInfo>;
}

/// Two-stage uniform exchange kernel.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kawasaki;

impl TransitionKernel for Kawasaki {
    fn step(&self, model: &BoltzmannModel, spec: &ConstraintSpec, state: &mut BitState, rng: &mut ChainRng) -> Result<StepInfo> {
        let accepted = kawasaki_step(model, spec, state, rng)?;
        Ok(StepInfo { accepted, params: SamplerParams::KAWASAKI })
    }
}

/// IM kernel with fixed parameters.
#[derive(Debug, Clone, Copy)]
pub struct Im(pub SamplerParams);

impl TransitionKernel for Im {
    fn step(&self, model: &BoltzmannModel, spec: &ConstraintSpec, state: &mut BitState, rng: &mut ChainRng) -> Result<StepInfo> {
        let accepted = im_step(model, spec, state, &self.0, rng)?;
        Ok(StepInfo { accepted, params: self.0 })
    }
}

fn check_exchangeable(spec: &ConstraintSpec, state: &BitState) -> Result<()> {
    if state.len() != spec.num_sites() {
        return Err(Error::Dimension { expected: spec.num_sites(), got: state.len() });
    }
    let n = spec.distance();
    if n == 0 || n == spec.num_sites() {
        return Err(Error::NoValidMove { ones: n, num_sites: spec.num_sites() });
    }
    Ok(())
}

/// Draws a Kawasaki exchange: a uniform first site, then a uniform site of
/// the opposite displacement status (which excludes the first).
pub fn kawasaki_propose(spec: &ConstraintSpec, state: &BitState, rng: &mut ChainRng) -> Result<Exchange> {
    check_exchangeable(spec, state)?;
    let num_sites = state.len();
    let first = rng.random_range(0..num_sites);
    let first_displaced = spec.is_displaced(state, first);
    let second = loop {
        let s = rng.random_range(0..num_sites);
        if spec.is_displaced(state, s) != first_displaced {
            break s;
        }
    };
    Ok(if first_displaced {
        Exchange { down_site: first, up_site: second }
    } else {
        Exchange { down_site: second, up_site: first }
    })
}

/// One Kawasaki MH step in place. Returns whether the move was accepted.
pub fn kawasaki_step(model: &BoltzmannModel, spec: &ConstraintSpec, state: &mut BitState, rng: &mut ChainRng) -> Result<bool> {
    let ex = kawasaki_propose(spec, state, rng)?;
    let e0 = state.energy();
    state.flip(model, ex.down_site);
    state.flip(model, ex.up_site);
    let delta = state.energy() - e0;
    let accepted = mh_accept(-model.beta() * delta, 0.0, rng)?;
    if !accepted {
        state.flip(model, ex.up_site);
        state.flip(model, ex.down_site);
    }
    Ok(accepted)
}

/// Accepts with probability `min(1, exp(log_pi_ratio + log_q_ratio))`.
pub fn mh_accept(log_pi_ratio: f64, log_q_ratio: f64, rng: &mut ChainRng) -> Result<bool> {
    let log_ratio = log_pi_ratio + log_q_ratio;
    if log_ratio.is_nan() {
        return Err(Error::InvalidRatio);
    }
    if log_ratio >= 0.0 {
        return Ok(true);
    }
    if log_ratio == f64::NEG_INFINITY {
        return Ok(false);
    }
    Ok(rng.random::<f64>() < log_ratio.exp())
}

fn check_walk(spec: &ConstraintSpec, state: &BitState, params: &SamplerParams) -> Result<()> {
    if state.len() != spec.num_sites() {
        return Err(Error::Dimension { expected: spec.num_sites(), got: state.len() });
    }
    let max = spec.max_walk_length();
    if params.saw_length == 0 || params.saw_length > max {
        return Err(Error::InfeasibleWalk { k: params.saw_length, max });
    }
    if !(params.energy_bias >= 0.0 && params.energy_bias.is_finite()) {
        return Err(Error::InvalidArgument(format!("energy bias must be finite and >= 0, got {}", params.energy_bias)));
    }
    Ok(())
}

/// Scratch space for one walk.
struct Walker {
    touched: Vec<bool>,
    candidates: Vec<usize>,
    log_weights: Vec<f64>,
}

impl Walker {
    fn new(num_sites: usize) -> Self {
        Self { touched: vec![false; num_sites], candidates: Vec::with_capacity(num_sites), log_weights: Vec::with_capacity(num_sites) }
    }

    /// Fills the candidate list with untouched sites whose displacement
    /// status equals `displaced`, and returns the log normaliser of their
    /// selection weights (weights are `gamma * dE`; the common `gamma * E(x)`
    /// factor cancels).
    fn collect(&mut self, spec: &ConstraintSpec, state: &BitState, displaced: bool, gamma: f64) -> f64 {
        self.candidates.clear();
        self.log_weights.clear();
        for site in 0..state.len() {
            if !self.touched[site] && spec.is_displaced(state, site) == displaced {
                self.candidates.push(site);
            }
        }
        debug_assert!(!self.candidates.is_empty());
        if gamma == 0.0 {
            return (self.candidates.len() as f64).ln();
        }
        let mut max = f64::NEG_INFINITY;
        for &site in &self.candidates {
            let w = gamma * state.delta_energy(site);
            max = max.max(w);
            self.log_weights.push(w);
        }
        let sum: f64 = self.log_weights.iter().map(|w| (w - max).exp()).sum();
        max + sum.ln()
    }

    fn log_weight(&self, idx: usize, gamma: f64) -> f64 {
        if gamma == 0.0 {
            0.0
        } else {
            self.log_weights[idx]
        }
    }

    /// Samples one candidate; returns `(site, log probability)`.
    fn choose(&mut self, spec: &ConstraintSpec, state: &BitState, displaced: bool, gamma: f64, rng: &mut ChainRng) -> (usize, f64) {
        let log_norm = self.collect(spec, state, displaced, gamma);
        let idx = if gamma == 0.0 {
            rng.random_range(0..self.candidates.len())
        } else {
            let mut u = rng.random::<f64>();
            let mut pick = self.candidates.len() - 1;
            for (i, w) in self.log_weights.iter().enumerate() {
                u -= (w - log_norm).exp();
                if u < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        (self.candidates[idx], self.log_weight(idx, gamma) - log_norm)
    }

    /// Log probability of choosing `site` from the current candidates.
    fn log_prob(&mut self, spec: &ConstraintSpec, state: &BitState, displaced: bool, gamma: f64, site: usize) -> f64 {
        let log_norm = self.collect(spec, state, displaced, gamma);
        let idx = self.candidates.iter().position(|&s| s == site).expect("site must be a valid candidate");
        self.log_weight(idx, gamma) - log_norm
    }

    fn reset(&mut self) {
        self.touched.iter_mut().for_each(|t| *t = false);
    }
}

/// Runs a walk forward on `state`, leaving it at the proposal.
fn walk_forward(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    state: &mut BitState,
    params: &SamplerParams,
    walker: &mut Walker,
    rng: &mut ChainRng,
) -> (Vec<Exchange>, f64) {
    let gamma = params.energy_bias;
    let mut walk = Vec::with_capacity(params.saw_length);
    let mut log_q = 0.0;
    walker.reset();
    for _ in 0..params.saw_length {
        let (down, lp_down) = walker.choose(spec, state, true, gamma, rng);
        state.flip(model, down);
        walker.touched[down] = true;
        let (up, lp_up) = walker.choose(spec, state, false, gamma, rng);
        state.flip(model, up);
        walker.touched[up] = true;
        log_q += lp_down + lp_up;
        walk.push(Exchange { down_site: down, up_site: up });
    }
    (walk, log_q)
}

/// Replays `walk` in reverse from the proposal held in `state`, returning
/// the log probability of the reverse walk. `state` ends at the origin.
fn walk_reverse(model: &BoltzmannModel, spec: &ConstraintSpec, state: &mut BitState, walk: &[Exchange], gamma: f64, walker: &mut Walker) -> f64 {
    walker.reset();
    let mut log_q = 0.0;
    for ex in walk.iter().rev() {
        log_q += walker.log_prob(spec, state, true, gamma, ex.up_site);
        state.flip(model, ex.up_site);
        walker.touched[ex.up_site] = true;
        log_q += walker.log_prob(spec, state, false, gamma, ex.down_site);
        state.flip(model, ex.down_site);
        walker.touched[ex.down_site] = true;
    }
    log_q
}

/// Draws an IM proposal from `state`.
pub fn im_propose(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    state: &BitState,
    params: &SamplerParams,
    rng: &mut ChainRng,
) -> Result<ProposalOutcome> {
    check_walk(spec, state, params)?;
    let mut walker = Walker::new(state.len());
    let mut work = state.clone();
    let (walk, log_q_forward) = walk_forward(model, spec, &mut work, params, &mut walker, rng);
    let proposal = work.clone();
    let log_q_reverse = walk_reverse(model, spec, &mut work, &walk, params.energy_bias, &mut walker);
    Ok(ProposalOutcome { proposal, log_q_forward, log_q_reverse, walk })
}

/// One IM MH step in place. On rejection the bits of `state` are unchanged.
pub fn im_step(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    state: &mut BitState,
    params: &SamplerParams,
    rng: &mut ChainRng,
) -> Result<bool> {
    check_walk(spec, state, params)?;
    let mut walker = Walker::new(state.len());
    let e_origin = state.energy();
    let (walk, log_q_forward) = walk_forward(model, spec, state, params, &mut walker, rng);
    let e_proposal = state.energy();
    let log_q_reverse = walk_reverse(model, spec, state, &walk, params.energy_bias, &mut walker);
    let log_pi = -model.beta() * (e_proposal - e_origin);
    let accepted = mh_accept(log_pi, log_q_reverse - log_q_forward, rng)?;
    if accepted {
        for ex in &walk {
            state.flip(model, ex.down_site);
            state.flip(model, ex.up_site);
        }
    }
    Ok(accepted)
}

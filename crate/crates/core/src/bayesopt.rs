//! Adaptation phase: Bayesian optimization of the IM parameters.
//!
//! Each iteration runs the chain for `L` steps with the current parameters,
//! scores the `L` energies with [`performance_criterion`], adds the pair to
//! the GP data set, and picks the next parameters by maximizing expected
//! improvement with DIRECT over the normalized parameter box.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, latin_hypercube, Dataset, GpPosterior, HyperBounds, Hyperparams};
use crate::model::{BitState, BoltzmannModel, ConstraintSpec};
use crate::objective::{performance_criterion, EnergyTrace, MIN_WINDOW};
use crate::rng::ChainRng;
use crate::samplers::{im_step, ParamBox, SamplerParams};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Expected improvement of a Gaussian `N(mean, std^2)` over `best + xi`,
/// for maximization.
pub fn expected_improvement(mean: f64, std: f64, best: f64, xi: f64) -> Result<f64> {
    if mean.is_nan() || std.is_nan() || best.is_nan() || xi.is_nan() {
        return Err(Error::InvalidArgument("expected improvement got NaN input".into()));
    }
    if std < 0.0 {
        return Err(Error::InvalidArgument(format!("negative predictive std {std}")));
    }
    let gap = mean - best - xi;
    if std == 0.0 {
        return Ok(gap.max(0.0));
    }
    let u = gap / std;
    Ok((std * (u * normal_cdf(u) + normal_pdf(u))).max(0.0))
}

/// Outcome of [`direct_maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

struct Rect {
    center: Vec<f64>,
    // side length along axis i is 3^-levels[i]
    levels: Vec<u32>,
    // minimization value (negated objective)
    value: f64,
}

impl Rect {
    fn size(&self) -> f64 {
        0.5 * self.levels.iter().map(|&l| 9f64.powi(-(l as i32))).sum::<f64>().sqrt()
    }

    fn size_key(&self) -> Vec<u32> {
        let mut k = self.levels.clone();
        k.sort_unstable();
        k
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Potentially optimal rectangles, largest first.
fn potentially_optimal(rects: &[Rect], epsilon: f64) -> Vec<usize> {
    // best rectangle of each size class
    let mut groups: Vec<(Vec<u32>, f64, usize)> = Vec::new();
    for (idx, r) in rects.iter().enumerate() {
        let key = r.size_key();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                let cur = &rects[g.2];
                let better = r.value < cur.value || (r.value == cur.value && lex_cmp(&r.center, &cur.center).is_lt());
                if better {
                    g.2 = idx;
                }
            }
            None => groups.push((key, r.size(), idx)),
        }
    }
    let fmin = rects.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let mut chosen: Vec<(f64, usize)> = Vec::new();
    for &(_, dj, j) in &groups {
        let fj = rects[j].value;
        let mut k_low = 0.0f64;
        let mut k_high = f64::INFINITY;
        for &(_, di, i) in &groups {
            let fi = rects[i].value;
            if di < dj {
                k_low = k_low.max((fj - fi) / (dj - di));
            } else if di > dj {
                k_high = k_high.min((fi - fj) / (di - dj));
            }
        }
        if k_high <= 0.0 || k_low > k_high {
            continue;
        }
        if k_high.is_finite() && fj - k_high * dj > fmin - epsilon * fmin.abs() {
            continue;
        }
        chosen.push((dj, j));
    }
    chosen.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex_cmp(&rects[a.1].center, &rects[b.1].center)));
    chosen.into_iter().map(|(_, j)| j).collect()
}

/// Deterministic DIRECT (divided rectangles) maximization over `[0,1]^dim`
/// using at most `budget` objective evaluations.
pub fn direct_maximize<F>(objective: F, dim: usize, budget: usize) -> Result<DirectResult>
where
    F: Fn(&[f64]) -> f64,
{
    if budget < 1 {
        return Err(Error::InvalidArgument("DIRECT budget must be at least 1".into()));
    }
    if dim < 1 {
        return Err(Error::InvalidArgument("DIRECT needs at least one dimension".into()));
    }
    const EPSILON: f64 = 1e-4;
    let eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    let center = vec![0.5; dim];
    let v0 = eval(&center);
    let mut best = (center.clone(), v0);
    let mut rects = vec![Rect { center, levels: vec![0; dim], value: v0 }];
    let mut evals = 1;

    'outer: while evals < budget {
        let selected = potentially_optimal(&rects, EPSILON);
        if selected.is_empty() {
            break;
        }
        for idx in selected {
            let min_level = *rects[idx].levels.iter().min().unwrap();
            let axes: Vec<usize> = (0..dim).filter(|&i| rects[idx].levels[i] == min_level).collect();
            if evals + 2 * axes.len() > budget {
                break 'outer;
            }
            let delta = 3f64.powi(-(min_level as i32 + 1));
            let mut samples = Vec::with_capacity(axes.len());
            for &axis in &axes {
                let mut lo = rects[idx].center.clone();
                let mut hi = lo.clone();
                lo[axis] -= delta;
                hi[axis] += delta;
                let (vl, vh) = (eval(&lo), eval(&hi));
                evals += 2;
                for (p, v) in [(&lo, vl), (&hi, vh)] {
                    if v < best.1 {
                        best = (p.clone(), v);
                    }
                }
                samples.push((axis, lo, vl, hi, vh));
            }
            samples.sort_by(|a, b| a.2.min(a.4).total_cmp(&b.2.min(b.4)).then(a.0.cmp(&b.0)));
            let mut levels = rects[idx].levels.clone();
            for (axis, lo, vl, hi, vh) in samples {
                levels[axis] += 1;
                rects.push(Rect { center: lo, levels: levels.clone(), value: vl });
                rects.push(Rect { center: hi, levels: levels.clone(), value: vh });
            }
            rects[idx].levels = levels;
        }
    }
    Ok(DirectResult { point: best.0, value: -best.1, evaluations: evals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub num_adaptations: usize,
    pub steps_per_adaptation: usize,
    pub init_design_size: usize,
    pub param_box: ParamBox,
    pub ei_exploration: f64,
    pub direct_budget: usize,
    /// Hyperparameters are refit every this many iterations after the
    /// initial design.
    pub refit_every: usize,
    /// Restart every evaluation from the initial state instead of carrying
    /// the chain over.
    pub restart_chain: bool,
    pub hyper_bounds: HyperBounds,
}

impl AdaptationConfig {
    pub fn new(param_box: ParamBox) -> Self {
        Self {
            num_adaptations: 100,
            steps_per_adaptation: 100,
            init_design_size: 10,
            param_box,
            ei_exploration: 0.01,
            direct_budget: 500,
            refit_every: 10,
            restart_chain: false,
            hyper_bounds: HyperBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_design_size < 1 || self.init_design_size > self.num_adaptations {
            return Err(Error::Config(format!(
                "need 1 <= init_design_size ({}) <= num_adaptations ({})",
                self.init_design_size, self.num_adaptations
            )));
        }
        if self.steps_per_adaptation < MIN_WINDOW {
            return Err(Error::Config(format!("steps_per_adaptation must be >= {MIN_WINDOW}")));
        }
        if !(self.ei_exploration >= 0.0 && self.ei_exploration.is_finite()) {
            return Err(Error::Config("ei_exploration must be finite and >= 0".into()));
        }
        if self.direct_budget < 1 || self.refit_every < 1 {
            return Err(Error::Config("direct_budget and refit_every must be >= 1".into()));
        }
        ParamBox::new(self.param_box.k_max, self.param_box.gamma_max)?;
        Ok(())
    }
}

/// One adaptation iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationStep {
    pub iteration: usize,
    pub params: SamplerParams,
    pub score: f64,
    pub accept_rate: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptationRecord {
    pub history: Vec<AdaptationStep>,
    pub gp: GpPosterior,
    pub hyper: Hyperparams,
    pub final_state: BitState,
}

impl AdaptationRecord {
    /// CSV with header `iteration,k,gamma,z,accept_rate`.
    pub fn to_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[AdaptationStep]) -> String {
    let mut s = String::from("iteration,k,gamma,z,accept_rate\n");
    for h in history {
        s.push_str(&format!("{},{},{},{},{}\n", h.iteration, h.params.saw_length, h.params.energy_bias, h.score, h.accept_rate));
    }
    s
}

/// Runs `L` IM steps and scores the visited energies.
fn evaluate(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    state: &mut BitState,
    params: &SamplerParams,
    steps: usize,
    rng: &mut ChainRng,
) -> Result<(f64, f64)> {
    let mut energies = Vec::with_capacity(steps);
    let mut accepted = 0usize;
    for _ in 0..steps {
        if im_step(model, spec, state, params, rng)? {
            accepted += 1;
        }
        energies.push(state.energy());
    }
    let score = performance_criterion(&EnergyTrace::new(energies)?)?.value;
    Ok((score, accepted as f64 / steps as f64))
}

/// Runs the adaptation loop from `initial_state`.
pub fn adapt(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    config: &AdaptationConfig,
    initial_state: BitState,
    rng: &mut ChainRng,
) -> Result<AdaptationRecord> {
    config.validate()?;
    let max_k = spec.max_walk_length();
    if config.param_box.k_max > max_k {
        return Err(Error::InfeasibleWalk { k: config.param_box.k_max, max: max_k });
    }
    if !spec.state_satisfies(&initial_state) {
        return Err(Error::InvalidArgument("initial state violates the constraint".into()));
    }
    let mut history = Vec::with_capacity(config.num_adaptations);
    match adapt_inner(model, spec, config, initial_state, rng, &mut history) {
        Ok((gp, hyper, final_state)) => Ok(AdaptationRecord { history, gp, hyper, final_state }),
        Err(e) => Err(Error::AdaptationAborted { history, source: Box::new(e) }),
    }
}

fn adapt_inner(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    config: &AdaptationConfig,
    initial_state: BitState,
    rng: &mut ChainRng,
    history: &mut Vec<AdaptationStep>,
) -> Result<(GpPosterior, Hyperparams, BitState)> {
    let pbox = config.param_box;
    let mut state = initial_state.clone();
    let mut data = Dataset::new(2);
    let run = |theta: SamplerParams, state: &mut BitState, data: &mut Dataset, rng: &mut ChainRng, history: &mut Vec<AdaptationStep>| -> Result<()> {
        if config.restart_chain {
            *state = initial_state.clone();
        }
        let (score, accept_rate) = evaluate(model, spec, state, &theta, config.steps_per_adaptation, rng)?;
        data.push(pbox.normalize(&theta).to_vec(), score)?;
        history.push(AdaptationStep { iteration: history.len(), params: theta, score, accept_rate });
        Ok(())
    };

    for u in latin_hypercube(config.init_design_size, 2, rng) {
        run(pbox.denormalize(&u), &mut state, &mut data, rng, history)?;
    }

    let mut hyper = Hyperparams::defaults(2);
    for i in config.init_design_size..=config.num_adaptations {
        if (i - config.init_design_size).is_multiple_of(config.refit_every) {
            hyper = fit_hyperparams(&data, &config.hyper_bounds, rng);
        }
        let post = GpPosterior::fit(data.clone(), hyper.clone())?;
        if i == config.num_adaptations {
            return Ok((post, hyper, state));
        }
        let theta = pbox.denormalize(&propose_next(&post, config)?.point);
        run(theta, &mut state, &mut data, rng, history)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// Maximizes expected improvement over the unit square.
pub fn propose_next(post: &GpPosterior, config: &AdaptationConfig) -> Result<DirectResult> {
    let best = post.dataset().best().unwrap_or(0.0);
    let xi = config.ei_exploration;
    direct_maximize(
        |x| {
            let (m, v) = post.predict_unchecked(x);
            expected_improvement(m, v.sqrt(), best, xi).unwrap_or(0.0)
        },
        2,
        config.direct_budget,
    )
}

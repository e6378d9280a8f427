//! Experiment orchestration: model presets, the four sampler arms, repeated
//! runs, ACF aggregation, result files, and an exact-enumeration oracle for
//! small constrained models.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayesopt::{adapt, AdaptationConfig, AdaptationRecord};
use crate::error::{Error, Result};
use crate::gp::HyperBounds;
use crate::model::{BitState, BoltzmannModel, ConstraintSpec};
use crate::objective::{autocorr_curve, EnergyTrace};
use crate::policy::{
    build_boltzmann_policy, draw_policy, fixed_gamma_policy, sampling_phase, uniform_policy, MixturePolicy, SamplingOutcome,
    DEFAULT_GRID_GAMMA, DEFAULT_NUM_DRAWS,
};
use crate::rng::{child_rng, derive_seed, ChainRng};
use crate::samplers::{ParamBox, SamplerParams, TransitionKernel};

/// Largest constrained state space [`exact_distribution`] will enumerate.
pub const MAX_ENUMERATION: u128 = 2_000_000;

/// Environment variable overriding the bundled preset directory.
pub const PRESET_DIR_ENV: &str = "BAYESMC_PRESET_DIR";

const BUNDLED_PRESETS: &[(&str, &str)] = &[
    ("grid2d", include_str!("../presets/grid2d.json")),
    ("cube3d", include_str!("../presets/cube3d.json")),
    ("rbm", include_str!("../presets/rbm.json")),
    ("grid2d-desk", include_str!("../presets/grid2d-desk.json")),
    ("cube3d-desk", include_str!("../presets/cube3d-desk.json")),
    ("rbm-desk", include_str!("../presets/rbm-desk.json")),
];

/// Model and constraint; the reference state is all zeros and `ones` is the
/// Hamming distance. Temperatures are given as `1 / beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Grid2d { width: usize, height: usize, coupling: f64, bias: f64, temperature: f64, ones: usize },
    Cube3d { side: usize, temperature: f64, ones: usize, seed: u64 },
    Rbm { num_visible: usize, num_hidden: usize, temperature: f64, ones: usize, seed: u64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<(BoltzmannModel, ConstraintSpec)> {
        let beta = |t: f64| {
            if t > 0.0 && t.is_finite() {
                Ok(1.0 / t)
            } else {
                Err(Error::Config(format!("temperature must be positive, got {t}")))
            }
        };
        let (model, ones) = match *self {
            ModelSpec::Grid2d { width, height, coupling, bias, temperature, ones } => {
                (BoltzmannModel::grid2d(width, height, coupling, bias, beta(temperature)?)?, ones)
            }
            ModelSpec::Cube3d { side, temperature, ones, seed } => (BoltzmannModel::cube3d(side, beta(temperature)?, seed)?, ones),
            ModelSpec::Rbm { num_visible, num_hidden, temperature, ones, seed } => {
                (BoltzmannModel::rbm(num_visible, num_hidden, beta(temperature)?, seed)?, ones)
            }
        };
        let spec = ConstraintSpec::from_ground(model.num_sites(), ones)?;
        Ok((model, spec))
    }

    pub fn num_sites(&self) -> usize {
        match *self {
            ModelSpec::Grid2d { width, height, .. } => width * height,
            ModelSpec::Cube3d { side, .. } => side * side * side,
            ModelSpec::Rbm { num_visible, num_hidden, .. } => num_visible + num_hidden,
        }
    }

    pub fn ones(&self) -> usize {
        match *self {
            ModelSpec::Grid2d { ones, .. } | ModelSpec::Cube3d { ones, .. } | ModelSpec::Rbm { ones, .. } => ones,
        }
    }

    pub fn max_walk_length(&self) -> usize {
        self.ones().min(self.num_sites().saturating_sub(self.ones()))
    }
}

/// One sampler arm of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arm", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArmSpec {
    Kawasaki,
    ImExpert { k_min: usize, k_max: usize, gamma: f64 },
    ImUnif { k_max: usize, gamma_max: f64 },
    ImBayesOpt { k_max: usize, gamma_max: f64 },
}

impl ArmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ArmSpec::Kawasaki => "kawasaki",
            ArmSpec::ImExpert { .. } => "im_expert",
            ArmSpec::ImUnif { .. } => "im_unif",
            ArmSpec::ImBayesOpt { .. } => "im_bayes_opt",
        }
    }

    /// Largest walk length the arm can use.
    pub fn k_max(&self) -> usize {
        match *self {
            ArmSpec::Kawasaki => 1,
            ArmSpec::ImExpert { k_max, .. } | ArmSpec::ImUnif { k_max, .. } | ArmSpec::ImBayesOpt { k_max, .. } => k_max,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ArmSpec::Kawasaki => Ok(()),
            ArmSpec::ImExpert { k_min, k_max, gamma } => {
                if k_min < 1 || k_min > k_max || !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::Config(format!("im_expert needs 1 <= k_min <= k_max and gamma >= 0 (got {k_min}, {k_max}, {gamma})")));
                }
                Ok(())
            }
            ArmSpec::ImUnif { k_max, gamma_max } | ArmSpec::ImBayesOpt { k_max, gamma_max } => {
                ParamBox::new(k_max, gamma_max).map(|_| ()).map_err(|e| Error::Config(format!("{}: {e}", self.name())))
            }
        }
    }
}

/// Adaptation settings; the parameter box comes from the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSettings {
    pub num_adaptations: usize,
    pub steps_per_adaptation: usize,
    #[serde(default = "default_init_design")]
    pub init_design_size: usize,
    #[serde(default = "default_xi")]
    pub ei_exploration: f64,
    #[serde(default = "default_direct_budget")]
    pub direct_budget: usize,
    #[serde(default = "default_refit_every")]
    pub refit_every: usize,
    #[serde(default)]
    pub restart_chain: bool,
}

fn default_init_design() -> usize {
    10
}
fn default_xi() -> f64 {
    0.01
}
fn default_direct_budget() -> usize {
    500
}
fn default_refit_every() -> usize {
    10
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            num_adaptations: 100,
            steps_per_adaptation: 100,
            init_design_size: default_init_design(),
            ei_exploration: default_xi(),
            direct_budget: default_direct_budget(),
            refit_every: default_refit_every(),
            restart_chain: false,
        }
    }
}

impl AdaptationSettings {
    pub fn with_box(&self, param_box: ParamBox) -> AdaptationConfig {
        AdaptationConfig {
            num_adaptations: self.num_adaptations,
            steps_per_adaptation: self.steps_per_adaptation,
            init_design_size: self.init_design_size,
            param_box,
            ei_exploration: self.ei_exploration,
            direct_budget: self.direct_budget,
            refit_every: self.refit_every,
            restart_chain: self.restart_chain,
            hyper_bounds: HyperBounds::default(),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.num_adaptations * self.steps_per_adaptation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySettings {
    #[serde(default = "default_num_draws")]
    pub num_draws: usize,
    #[serde(default = "default_grid_gamma")]
    pub grid_gamma: usize,
}

fn default_num_draws() -> usize {
    DEFAULT_NUM_DRAWS
}
fn default_grid_gamma() -> usize {
    DEFAULT_GRID_GAMMA
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self { num_draws: DEFAULT_NUM_DRAWS, grid_gamma: DEFAULT_GRID_GAMMA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSpec,
    pub arms: Vec<ArmSpec>,
    pub num_runs: usize,
    pub steps_per_run: usize,
    pub burn_in: usize,
    #[serde(default)]
    pub adaptation: AdaptationSettings,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    pub master_seed: u64,
}

fn default_max_lag() -> usize {
    2000
}

impl ExperimentConfig {
    /// Parses and validates a JSON config. Parse errors carry line and
    /// column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads a named preset from `$BAYESMC_PRESET_DIR/<name>.json` when the
    /// variable is set, else from the bundled copies.
    pub fn preset(name: &str) -> Result<Self> {
        if let Some(dir) = std::env::var_os(PRESET_DIR_ENV) {
            let path = PathBuf::from(dir).join(format!("{name}.json"));
            if path.exists() {
                return Self::load(&path);
            }
        }
        let text = bundled_preset(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
        Self::from_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_runs < 1 {
            return Err(Error::Config("num_runs must be >= 1".into()));
        }
        if self.burn_in >= self.steps_per_run {
            return Err(Error::Config(format!("burn_in ({}) must be < steps_per_run ({})", self.burn_in, self.steps_per_run)));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm is required".into()));
        }
        let n = self.model.ones();
        let sites = self.model.num_sites();
        if n == 0 || n >= sites {
            return Err(Error::Config(format!("ones must be in 1..{sites}, got {n}")));
        }
        let max_k = self.model.max_walk_length();
        let mut names = std::collections::HashSet::new();
        for arm in &self.arms {
            arm.validate()?;
            if !names.insert(arm.name()) {
                return Err(Error::Config(format!("arm '{}' listed twice", arm.name())));
            }
            if arm.k_max() > max_k {
                return Err(Error::Config(format!(
                    "arm '{}' uses walks up to k = {} but the model allows at most {max_k}",
                    arm.name(),
                    arm.k_max()
                )));
            }
            if let ArmSpec::ImBayesOpt { k_max, gamma_max } = *arm {
                self.adaptation.with_box(ParamBox::new(k_max, gamma_max)?).validate()?;
            }
        }
        if self.policy.num_draws < 1 || self.policy.grid_gamma < 1 {
            return Err(Error::Config("policy num_draws and grid_gamma must be >= 1".into()));
        }
        Ok(())
    }

    /// Every (arm, run) unit with its derived seed, in output order.
    pub fn plan(&self) -> Vec<RunPlan> {
        self.arms
            .iter()
            .flat_map(|arm| {
                (0..self.num_runs).map(move |run| RunPlan {
                    arm: arm.name().to_string(),
                    run,
                    seed: derive_seed(self.master_seed, &format!("arm:{}", arm.name()), run as u64),
                    initial_state_seed: derive_seed(self.master_seed, "initial-state", run as u64),
                    sampling_steps: self.steps_per_run,
                    burn_in: self.burn_in,
                    adaptation_steps: match arm {
                        ArmSpec::ImBayesOpt { .. } => self.adaptation.total_steps(),
                        _ => 0,
                    },
                })
            })
            .collect()
    }

    /// Manifest describing the expanded protocol; contains no timings.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": self.hash(),
            "master_seed": self.master_seed,
            "config": self,
            "units": self.plan(),
        })
    }
}

pub fn bundled_preset(name: &str) -> Option<&'static str> {
    BUNDLED_PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> Vec<&'static str> {
    BUNDLED_PRESETS.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub arm: String,
    pub run: usize,
    pub seed: u64,
    pub initial_state_seed: u64,
    pub sampling_steps: usize,
    pub burn_in: usize,
    pub adaptation_steps: usize,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub arm: String,
    pub run: usize,
    pub seed: u64,
    pub outcome: SamplingOutcome,
    pub wall_clock: Duration,
    pub policy: MixturePolicy,
    pub adaptation: Option<AdaptationRecord>,
}

impl RunRecord {
    pub fn energies(&self) -> Vec<f64> {
        self.outcome.energies()
    }

    pub fn accept_rate(&self) -> f64 {
        self.outcome.accept_rate()
    }
}

/// The policy an arm samples with. `IMBayesOpt` adapts first.
fn arm_policy(
    arm: &ArmSpec,
    config: &ExperimentConfig,
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    initial: &BitState,
    seed: u64,
) -> Result<(MixturePolicy, Option<AdaptationRecord>)> {
    let mut draw_rng = child_rng(seed, "policy", 0);
    let m = config.policy.num_draws;
    let grid = config.policy.grid_gamma;
    Ok(match *arm {
        ArmSpec::Kawasaki => (MixturePolicy::point_mass(SamplerParams::KAWASAKI), None),
        ArmSpec::ImExpert { k_min, k_max, gamma } => {
            let (s, w) = fixed_gamma_policy(k_min, k_max, gamma)?;
            (draw_policy(s, w, m, &mut draw_rng)?, None)
        }
        ArmSpec::ImUnif { k_max, gamma_max } => {
            let (s, w) = uniform_policy(&ParamBox::new(k_max, gamma_max)?, grid);
            (draw_policy(s, w, m, &mut draw_rng)?, None)
        }
        ArmSpec::ImBayesOpt { k_max, gamma_max } => {
            let pbox = ParamBox::new(k_max, gamma_max)?;
            let cfg = config.adaptation.with_box(pbox);
            let record = adapt(model, spec, &cfg, initial.clone(), &mut child_rng(seed, "adapt", 0))?;
            let (s, w) = build_boltzmann_policy(&record.gp, &pbox, grid)?;
            (draw_policy(s, w, m, &mut draw_rng)?, Some(record))
        }
    })
}

/// Runs one (arm, run) unit.
pub fn run_unit(config: &ExperimentConfig, model: &BoltzmannModel, spec: &ConstraintSpec, plan: &RunPlan) -> Result<RunRecord> {
    let arm = config
        .arms
        .iter()
        .find(|a| a.name() == plan.arm)
        .ok_or_else(|| Error::Config(format!("unknown arm '{}'", plan.arm)))?;
    let start = Instant::now();
    let initial = spec.random_state(model, &mut crate::rng::rng_from_seed(plan.initial_state_seed))?;
    let (policy, adaptation) = arm_policy(arm, config, model, spec, &initial, plan.seed)?;
    let outcome = sampling_phase(model, spec, &policy, initial, plan.sampling_steps, &mut child_rng(plan.seed, "sample", 0))?;
    Ok(RunRecord { arm: plan.arm.clone(), run: plan.run, seed: plan.seed, outcome, wall_clock: start.elapsed(), policy, adaptation })
}

/// Runs every arm x run unit in parallel on the current rayon pool. Output
/// order follows [`ExperimentConfig::plan`] regardless of completion order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let (model, spec) = config.model.build()?;
    config.plan().par_iter().map(|plan| run_unit(config, &model, &spec, plan)).collect()
}

/// Across-run mean and standard error of the autocorrelation per lag.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfSummary {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl AcfSummary {
    /// Lag `l` lives at index `l - 1`.
    pub fn max_lag(&self) -> usize {
        self.mean.len()
    }

    /// CSV `lag,acf_mean,acf_stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,acf_mean,acf_stderr\n");
        for (i, (m, e)) in self.mean.iter().zip(&self.stderr).enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, m, e));
        }
        s
    }
}

/// Drops `burn_in` samples from each trace and aggregates lags
/// `1..=max_lag`.
pub fn aggregate_acf(traces: &[Vec<f64>], burn_in: usize, max_lag: usize) -> Result<AcfSummary> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument(format!("standard errors need at least 2 runs, got {}", traces.len())));
    }
    if max_lag < 1 {
        return Err(Error::InvalidArgument("max_lag must be >= 1".into()));
    }
    let curves = traces
        .iter()
        .map(|t| {
            let kept = t.get(burn_in..).unwrap_or(&[]);
            if max_lag >= kept.len() {
                return Err(Error::InvalidArgument(format!(
                    "max_lag {max_lag} must be below the post-burn-in length {}",
                    kept.len()
                )));
            }
            Ok(autocorr_curve(&EnergyTrace::new(kept.to_vec())?, max_lag))
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = curves.len() as f64;
    let mut mean = Vec::with_capacity(max_lag);
    let mut stderr = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let first = curves[0][lag];
        let m = first + curves.iter().map(|c| c[lag] - first).sum::<f64>() / runs;
        let var = curves.iter().map(|c| (c[lag] - m).powi(2)).sum::<f64>() / (runs - 1.0);
        mean.push(m);
        stderr.push((var / runs).sqrt());
    }
    Ok(AcfSummary { mean, stderr })
}

/// Per-step mean energy across runs, CSV `step,mean_energy`.
pub fn mean_energy_csv(traces: &[Vec<f64>]) -> String {
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    let mut s = String::from("step,mean_energy\n");
    for t in 0..len {
        let m = traces.iter().map(|tr| tr[t]).sum::<f64>() / traces.len() as f64;
        s.push_str(&format!("{t},{m}\n"));
    }
    s
}

/// Groups traces by arm in config order.
pub fn traces_by_arm(records: &[RunRecord]) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut out: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for r in records {
        match out.iter_mut().find(|(a, _)| *a == r.arm) {
            Some((_, v)) => v.push(r.energies()),
            None => out.push((r.arm.clone(), vec![r.energies()])),
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Writes per-run CSVs, adaptation and policy data, per-arm aggregates, the
/// manifest, and a separate timing file.
pub fn write_results(config: &ExperimentConfig, records: &[RunRecord], out: &Path) -> Result<()> {
    write(&out.join("manifest.json"), &serde_json::to_string_pretty(&config.manifest())?)?;
    let mut timing = Vec::new();
    for r in records {
        let stem = format!("{}_run{}", r.arm, r.run);
        write(&out.join("runs").join(format!("{stem}.csv")), &r.outcome.to_csv())?;
        write(&out.join("policies").join(format!("{stem}_grid.csv")), &r.policy.grid_csv())?;
        write(&out.join("policies").join(format!("{stem}_draws.csv")), &r.policy.draws_csv())?;
        if let Some(a) = &r.adaptation {
            write(&out.join("adaptation").join(format!("{stem}.csv")), &a.to_csv())?;
            write(&out.join("adaptation").join(format!("{stem}_gp.json")), &serde_json::to_string_pretty(&a.gp.snapshot())?)?;
        }
        timing.push(serde_json::json!({
            "arm": r.arm, "run": r.run, "seconds": r.wall_clock.as_secs_f64(), "accept_rate": r.accept_rate(),
        }));
    }
    for (arm, traces) in traces_by_arm(records) {
        let post = config.steps_per_run - config.burn_in;
        if traces.len() >= 2 {
            let lag = config.max_lag.min(post.saturating_sub(1)).max(1);
            let summary = aggregate_acf(&traces, config.burn_in, lag)?;
            write(&out.join("aggregate").join(format!("{arm}_acf.csv")), &summary.to_csv())?;
        }
        write(&out.join("aggregate").join(format!("{arm}_energy.csv")), &mean_energy_csv(&traces))?;
    }
    write(&out.join("timing.json"), &serde_json::to_string_pretty(&timing)?)?;
    Ok(())
}

/// Exact restricted Boltzmann distribution over the constrained space,
/// keyed by packed state words.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    probs: HashMap<Vec<u64>, f64>,
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, state: &BitState) -> f64 {
        self.probs.get(state.words()).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u64>, &f64)> {
        self.probs.iter()
    }

    /// Total-variation distance to an empirical histogram.
    pub fn tv_distance(&self, counts: &HashMap<Vec<u64>, u64>) -> f64 {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return 1.0;
        }
        let total = total as f64;
        let mut tv: f64 = self.probs.iter().map(|(k, p)| (counts.get(k).copied().unwrap_or(0) as f64 / total - p).abs()).sum();
        tv += counts.iter().filter(|(k, _)| !self.probs.contains_key(*k)).map(|(_, c)| *c as f64 / total).sum::<f64>();
        0.5 * tv
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

/// Enumerates the constrained space and normalizes `exp(-beta E)` in log
/// space.
pub fn exact_distribution(model: &BoltzmannModel, spec: &ConstraintSpec) -> Result<ExactDistribution> {
    let n_sites = model.num_sites();
    if spec.num_sites() != n_sites {
        return Err(Error::Dimension { expected: n_sites, got: spec.num_sites() });
    }
    let size = binomial(n_sites, spec.distance());
    if size > MAX_ENUMERATION {
        return Err(Error::StateSpaceTooLarge { size, limit: MAX_ENUMERATION });
    }
    let n = spec.distance();
    let mut combo: Vec<usize> = (0..n).collect();
    let mut states = Vec::with_capacity(size as usize);
    loop {
        let mut bits = spec.reference().to_vec();
        for &i in &combo {
            bits[i] = !bits[i];
        }
        let log_w = -model.beta() * model.energy(&bits)?;
        states.push((BitState::new(model, &bits)?.words().to_vec(), log_w));
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                let max = states.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = states.iter().map(|s| (s.1 - max).exp()).sum();
                let log_z = max + z.ln();
                let probs = states.into_iter().map(|(k, lw)| (k, (lw - log_z).exp())).collect();
                return Ok(ExactDistribution { probs });
            }
            i -= 1;
            if combo[i] < n_sites - n + i {
                combo[i] += 1;
                for j in i + 1..n {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Empirical state histogram of a chain: the initial state plus the state
/// after each of `steps` kernel applications, minus the first `burn_in`
/// entries.
pub fn state_histogram<K: TransitionKernel + ?Sized>(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    kernel: &K,
    initial: BitState,
    steps: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<HashMap<Vec<u64>, u64>> {
    let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut state = initial;
    if burn_in == 0 {
        *counts.entry(state.words().to_vec()).or_default() += 1;
    }
    for t in 1..=steps {
        kernel.step(model, spec, &mut state, rng)?;
        if t >= burn_in {
            if let Some(c) = counts.get_mut(state.words()) {
                *c += 1;
            } else {
                counts.insert(state.words().to_vec(), 1);
            }
        }
    }
    Ok(counts)
}

/// Total-variation distance between a chain's empirical state distribution
/// and the exact restricted distribution.
pub fn chain_vs_oracle<K: TransitionKernel + ?Sized>(
    model: &BoltzmannModel,
    spec: &ConstraintSpec,
    kernel: &K,
    initial: BitState,
    steps: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<f64> {
    let exact = exact_distribution(model, spec)?;
    let counts = state_histogram(model, spec, kernel, initial, steps, burn_in, rng)?;
    Ok(exact.tv_distance(&counts))
}

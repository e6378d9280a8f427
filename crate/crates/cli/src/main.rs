use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayesmc::bayesopt::adapt;
use bayesmc::gp::GpSnapshot;
use bayesmc::harness::{
    aggregate_acf, mean_energy_csv, preset_names, run_experiment, write_results, ArmSpec, ExperimentConfig, RunPlan,
};
use bayesmc::policy::{build_boltzmann_policy, draw_policy, gamma_grid, sampling_phase, MixturePolicy};
use bayesmc::rng::{child_rng, rng_from_seed};
use bayesmc::samplers::{ParamBox, SamplerParams};
use bayesmc::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bayesmc", version, about = "Bayesian-optimized adaptive MCMC for constrained Boltzmann machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `models`).
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm and write per-run CSVs, aggregates and a manifest.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
        /// Validate and write the manifest without running chains.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run only the adaptation phase of the im_bayes_opt arm (run 0).
    Adapt {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sampling phase from a GP snapshot or a policy grid CSV.
    Sample {
        #[command(flatten)]
        source: Source,
        /// GP snapshot JSON written by `adapt` or `run`.
        #[arg(long, conflicts_with = "policy", required_unless_present = "policy")]
        gp: Option<PathBuf>,
        /// Policy grid CSV (`k,gamma,weight`).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Sampling steps (default: steps_per_run).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute aggregates from the run CSVs of a results directory.
    Analyze {
        /// Results directory written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
        /// Output directory (default: <input>/aggregate).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate GP mean and standard deviation over the (k, gamma) grid.
    DumpGp {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        gp: PathBuf,
        /// Gamma grid points (default: policy grid_gamma).
        #[arg(long)]
        grid_gamma: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List bundled presets.
    Models,
}

fn load(source: &Source) -> Result<ExperimentConfig, Error> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(seed) = source.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn bayes_opt_arm(config: &ExperimentConfig) -> Result<(ParamBox, RunPlan), Error> {
    let pbox = config
        .arms
        .iter()
        .find_map(|a| match *a {
            ArmSpec::ImBayesOpt { k_max, gamma_max } => Some(ParamBox::new(k_max, gamma_max)),
            _ => None,
        })
        .ok_or_else(|| Error::Config("config has no im_bayes_opt arm".into()))??;
    let plan = config.plan().into_iter().find(|p| p.arm == "im_bayes_opt" && p.run == 0).expect("arm is planned");
    Ok((pbox, plan))
}

fn cmd_run(source: &Source, out: &Path, jobs: Option<usize>, max_lag: Option<usize>, dry_run: bool) -> Result<(), Error> {
    let mut config = load(source)?;
    if let Some(lag) = max_lag {
        config.max_lag = lag;
    }
    config.validate()?;
    if dry_run {
        write(&out.join("manifest.json"), &serde_json::to_string_pretty(&config.manifest())?)?;
        for p in config.plan() {
            println!(
                "{} run {}: seed {} adaptation {} sampling {} burn-in {}",
                p.arm, p.run, p.seed, p.adaptation_steps, p.sampling_steps, p.burn_in
            );
        }
        return Ok(());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let records = pool.install(|| run_experiment(&config))?;
    write_results(&config, &records, out)?;
    for r in &records {
        println!("{} run {}: accept rate {:.4}, {:.1}s", r.arm, r.run, r.accept_rate(), r.wall_clock.as_secs_f64());
    }
    Ok(())
}

fn cmd_adapt(source: &Source, out: &Path) -> Result<(), Error> {
    let config = load(source)?;
    config.validate()?;
    let (pbox, plan) = bayes_opt_arm(&config)?;
    let (model, spec) = config.model.build()?;
    let initial = spec.random_state(&model, &mut rng_from_seed(plan.initial_state_seed))?;
    let record = adapt(&model, &spec, &config.adaptation.with_box(pbox), initial, &mut child_rng(plan.seed, "adapt", 0))?;
    let (support, weights) = build_boltzmann_policy(&record.gp, &pbox, config.policy.grid_gamma)?;
    let policy = draw_policy(support, weights, config.policy.num_draws, &mut child_rng(plan.seed, "policy", 0))?;
    write(&out.join("adaptation.csv"), &record.to_csv())?;
    write(&out.join("gp.json"), &serde_json::to_string_pretty(&record.gp.snapshot())?)?;
    write(&out.join("policy_grid.csv"), &policy.grid_csv())?;
    write(&out.join("policy_draws.csv"), &policy.draws_csv())?;
    let best = record.history.iter().max_by(|a, b| a.score.total_cmp(&b.score)).expect("history is non-empty");
    println!("best z = {:.4} at k = {}, gamma = {:.4}", best.score, best.params.saw_length, best.params.energy_bias);
    Ok(())
}

fn cmd_sample(source: &Source, gp: Option<&Path>, policy: Option<&Path>, steps: Option<usize>, out: &Path) -> Result<(), Error> {
    let config = load(source)?;
    config.validate()?;
    let (pbox, plan) = bayes_opt_arm(&config)?;
    let (support, weights) = match (gp, policy) {
        (Some(path), _) => {
            let snap: GpSnapshot = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            build_boltzmann_policy(&snap.to_posterior()?, &pbox, config.policy.grid_gamma)?
        }
        (None, Some(path)) => MixturePolicy::parse_grid_csv(&std::fs::read_to_string(path)?)?,
        (None, None) => return Err(Error::Config("one of --gp or --policy is required".into())),
    };
    let mixture = draw_policy(support, weights, config.policy.num_draws, &mut child_rng(plan.seed, "policy", 0))?;
    let (model, spec) = config.model.build()?;
    let initial = spec.random_state(&model, &mut rng_from_seed(plan.initial_state_seed))?;
    let outcome = sampling_phase(&model, &spec, &mixture, initial, steps.unwrap_or(config.steps_per_run), &mut child_rng(plan.seed, "sample", 0))?;
    write(&out.join("sample.csv"), &outcome.to_csv())?;
    write(&out.join("policy_draws.csv"), &mixture.draws_csv())?;
    println!("accept rate {:.4}", outcome.accept_rate());
    Ok(())
}

/// Reads the energy column of a run CSV.
fn read_energies(path: &Path) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let col = header
        .split(',')
        .position(|h| h == "energy")
        .ok_or_else(|| Error::Config(format!("{}: no energy column", path.display())))?;
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .nth(col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}:{}: bad energy value", path.display(), i + 2)))
        })
        .collect()
}

fn cmd_analyze(input: &Path, burn_in: Option<usize>, max_lag: Option<usize>, out: Option<&Path>) -> Result<(), Error> {
    let manifest: Option<serde_json::Value> = match std::fs::read_to_string(input.join("manifest.json")) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(_) => None,
    };
    let from_manifest = |key: &str| manifest.as_ref().and_then(|m| m["config"][key].as_u64()).map(|v| v as usize);
    let burn_in = burn_in.or_else(|| from_manifest("burn_in")).unwrap_or(0);
    let max_lag = max_lag.or_else(|| from_manifest("max_lag")).unwrap_or(2000);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| input.join("aggregate"));

    let mut files: Vec<PathBuf> = std::fs::read_dir(input.join("runs"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut arms: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for f in &files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let arm = stem.rsplit_once("_run").map(|(a, _)| a).unwrap_or(stem).to_string();
        let trace = read_energies(f)?;
        match arms.iter_mut().find(|(a, _)| *a == arm) {
            Some((_, v)) => v.push(trace),
            None => arms.push((arm, vec![trace])),
        }
    }
    if arms.is_empty() {
        return Err(Error::InvalidArgument(format!("no run CSVs under {}", input.join("runs").display())));
    }
    for (arm, traces) in &arms {
        let summary = aggregate_acf(traces, burn_in, max_lag)?;
        write(&out.join(format!("{arm}_acf.csv")), &summary.to_csv())?;
        write(&out.join(format!("{arm}_energy.csv")), &mean_energy_csv(traces))?;
        let lags = summary.max_lag().min(200);
        let mean_abs = summary.mean[..lags].iter().map(|r| r.abs()).sum::<f64>() / lags as f64;
        println!("{arm}: {} runs, mean |acf| over lags 1..{lags} = {mean_abs:.4}", traces.len());
    }
    Ok(())
}

fn cmd_dump_gp(source: &Source, gp: &Path, grid_gamma: Option<usize>, out: &Path) -> Result<(), Error> {
    let config = load(source)?;
    let (pbox, _) = bayes_opt_arm(&config)?;
    let snap: GpSnapshot = serde_json::from_str(&std::fs::read_to_string(gp)?)?;
    let post = snap.to_posterior()?;
    let gammas = gamma_grid(pbox.gamma_max, grid_gamma.unwrap_or(config.policy.grid_gamma));
    let mut csv = String::from("k,gamma,mean,std\n");
    for k in 1..=pbox.k_max {
        for &g in &gammas {
            let theta = pbox.normalize(&SamplerParams::new(k, g)?);
            let (m, v) = post.predict(&theta)?;
            csv.push_str(&format!("{k},{g},{m},{}\n", v.sqrt()));
        }
    }
    write(out, &csv)
}

fn cmd_models() -> Result<(), Error> {
    for name in preset_names() {
        let c = ExperimentConfig::preset(name)?;
        let arms: Vec<&str> = c.arms.iter().map(ArmSpec::name).collect();
        println!(
            "{name}: {} sites, {} ones, {} runs x {} steps (burn-in {}), arms {}",
            c.model.num_sites(),
            c.model.ones(),
            c.num_runs,
            c.steps_per_run,
            c.burn_in,
            arms.join(",")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source, out, jobs, max_lag, dry_run } => cmd_run(source, out, *jobs, *max_lag, *dry_run),
        Command::Adapt { source, out } => cmd_adapt(source, out),
        Command::Sample { source, gp, policy, steps, out } => cmd_sample(source, gp.as_deref(), policy.as_deref(), *steps, out),
        Command::Analyze { input, burn_in, max_lag, out } => cmd_analyze(input, *burn_in, *max_lag, out.as_deref()),
        Command::DumpGp { source, gp, grid_gamma, out } => cmd_dump_gp(source, gp, *grid_gamma, out),
        Command::Models => cmd_models(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

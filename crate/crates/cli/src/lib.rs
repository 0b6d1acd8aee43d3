//! Command-line workflows: train, evaluate, sweep, verify-theory, and
//! export-heatmap. All numeric work runs in f64.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 training
//! divergence, 3 theorem verification failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;

use stac_core::envs::{danger_occupancy, make_env, RiskyPointMass, RISKY_POINT_MASS_ID};
use stac_core::error::{Error, Result};
use stac_core::theory::{run_suite, write_report_csv, InstanceParams, SuiteConfig};
use stac_core::trainer::{
    evaluate, load_config_file, load_model, resolve_config, rollout_states, save_model, sweep,
    sweep_table_string, train, write_sweep_csv, AlgorithmKind, ConfigPatch, CsvMetricSink,
    RunManifest, SweepGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_THEOREM_VIOLATION: i32 = 3;

/// Environment variable naming the default output root (fallback: ./runs).
pub const OUT_ROOT_ENV: &str = "STAC_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "stac", version, about = "Pessimistic distributional actor-critic workflows")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Train an agent and write metrics.csv, manifest.toml, and model.json.
    Train(TrainArgs),
    /// Evaluate a saved model over deterministic episodes.
    Evaluate(EvaluateArgs),
    /// Run a (beta x dropout x seed) grid and aggregate final returns.
    Sweep(SweepArgs),
    /// Verify the overestimation inequalities on random tabular instances.
    VerifyTheory(VerifyTheoryArgs),
    /// Roll a saved policy and export a position occupancy grid as CSV.
    ExportHeatmap(HeatmapArgs),
}

/// Hyperparameter flags shared by train and sweep; unset flags fall back to
/// the config file, the per-environment preset, and the built-in defaults,
/// in that order.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigFlags {
    #[arg(long)]
    pub algo: Option<AlgorithmKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub critic_lr: Option<f64>,
    #[arg(long)]
    pub actor_lr: Option<f64>,
    #[arg(long)]
    pub alpha_lr: Option<f64>,
    #[arg(long)]
    pub init_alpha: Option<f64>,
    #[arg(long)]
    pub target_entropy: Option<f64>,
    #[arg(long)]
    pub buffer_capacity: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_starts: Option<u64>,
    #[arg(long)]
    pub utd: Option<u32>,
    #[arg(long = "steps")]
    pub steps: Option<u64>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<u32>,
    #[arg(long)]
    pub actor_dropout: Option<f64>,
    #[arg(long)]
    pub critic_dropout: Option<f64>,
    /// Hidden widths, comma-separated (e.g. 64,64).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_warmup: bool,
    #[arg(long)]
    pub no_lagged_dropout: bool,
}

impl ConfigFlags {
    fn to_patch(&self) -> ConfigPatch {
        ConfigPatch {
            algorithm: self.algo,
            beta: self.beta,
            gamma: self.gamma,
            rho: self.rho,
            critic_lr: self.critic_lr,
            actor_lr: self.actor_lr,
            alpha_lr: self.alpha_lr,
            init_alpha: self.init_alpha,
            target_entropy: self.target_entropy,
            buffer_capacity: self.buffer_capacity,
            batch_size: self.batch_size,
            learning_starts: self.learning_starts,
            utd_ratio: self.utd,
            total_steps: self.steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            actor_dropout: self.actor_dropout,
            critic_dropout: self.critic_dropout,
            hidden_dims: self.hidden.clone(),
            seed: self.seed,
            warmup_uniform: if self.no_warmup { Some(false) } else { None },
            lagged_dropout: if self.no_lagged_dropout { Some(false) } else { None },
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Environment id (risky-pointmass-v0 or point-reach-v0).
    #[arg(long)]
    pub env: Option<String>,
    /// TOML config file or a previous run's manifest.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: $STAC_OUT_ROOT/<env>-<algo>-s<seed>-<ms>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// model.json produced by train.
    #[arg(long)]
    pub model: PathBuf,
    /// Environment override (defaults to the model's environment).
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub episodes: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for per-run artifacts and sweep.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pessimism levels: comma list or start:stop:step.
    #[arg(long, default_value = "0:0.5:0.125")]
    pub betas: String,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub actor_dropouts: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub critic_dropouts: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Args, Debug)]
pub struct VerifyTheoryArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Soft-backup temperatures to rotate through.
    #[arg(long, value_delimiter = ',', default_value = "0.2,1,5")]
    pub alpha_tildes: Vec<f64>,
    /// Pessimism grid: comma list or start:stop:step.
    #[arg(long, default_value = "0:0.5:0.125")]
    pub beta_grid: String,
    /// Upper bound of the random per-entry σ field.
    #[arg(long, default_value_t = 2.0)]
    pub sigma_max: f64,
    /// Force a constant σ field instead of a random one.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Where to write the per-entry slack report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// model.json produced by train.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub env: Option<String>,
    /// Evaluation steps to roll from random initial points.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Grid resolution per axis over [0, 1]^2.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (default: heatmap.csv next to the model).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses "a,b,c" or "start:stop:step" (stop inclusive up to float slack).
pub fn parse_value_grid(spec: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::config(format!("grid: `{s}` is not a number")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "grid: expected start:stop:step, got `{spec}`"
            )));
        }
        let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 || stop < start {
            return Err(Error::config("grid: need step > 0 and stop >= start"));
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= stop + step * 1e-9 {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        spec.split(',').map(parse).collect()
    }
}

/// Parses argv and runs; maps every failure to a process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Error::Diverged { step, detail }) => {
            eprintln!("error: training diverged at env step {step}: {detail}");
            EXIT_DIVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Runs a parsed command, returning its exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::VerifyTheory(args) => cmd_verify_theory(args),
        Cmd::ExportHeatmap(args) => cmd_export_heatmap(args),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Resolves (env, config) from flags and an optional config file.
fn resolve_run(
    env_flag: Option<&str>,
    config_path: Option<&Path>,
    flags: &ConfigFlags,
) -> Result<(String, stac_core::trainer::TrainConfig)> {
    let file = config_path.map(load_config_file).transpose()?;
    let env = env_flag
        .map(String::from)
        .or_else(|| file.as_ref().and_then(|f| f.env.clone()))
        .ok_or_else(|| Error::config("env: missing (pass --env or set it in the config file)"))?;
    let config = resolve_config(
        &env,
        file.as_ref().map(|f| &f.patch),
        Some(&flags.to_patch()),
    )?;
    Ok((env, config))
}

pub fn cmd_train(args: TrainArgs) -> Result<i32> {
    let (env, config) = resolve_run(args.env.as_deref(), args.config.as_deref(), &args.flags)?;
    let out_dir = args.out.unwrap_or_else(|| {
        out_root().join(format!("{env}-{}-s{}-{}", config.algorithm, config.seed, unix_ms()))
    });
    std::fs::create_dir_all(&out_dir)?;
    let manifest = RunManifest::new(&env, &out_dir, "f64", config.clone());
    manifest.save(&out_dir.join("manifest.toml"))?;
    println!(
        "training {} on {env}: {} steps, beta {}, seed {} -> {}",
        config.algorithm,
        config.total_steps,
        config.beta,
        config.seed,
        out_dir.display()
    );
    let mut sink = CsvMetricSink::create(&out_dir.join("metrics.csv"))?;
    let result = train::<f64>(&config, &env, &mut sink)?;
    save_model(&out_dir.join("model.json"), &result.algorithm, &env, &config)?;
    if let Some(last) = result.records.last() {
        println!(
            "done: {} env steps, {} gradient phases, final return {:.3}, value error {:.3}",
            result.env_steps, result.gradient_phases, last.episodic_return,
            last.value_estimation_error
        );
    } else {
        println!("done: {} env steps (no evaluation points)", result.env_steps);
    }
    Ok(EXIT_OK)
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<i32> {
    let (algo, model_env, config) = load_model::<f64>(&args.model)?;
    let env_id = args.env.unwrap_or(model_env);
    let mut env = make_env::<f64>(&env_id)?;
    let mut rng = seeded(args.seed);
    let summary = evaluate(&algo, env.as_mut(), config.gamma, args.episodes, &mut rng)?;
    println!(
        "{env_id}: mean return {:.4}, value error {:.4}, sigma {:.4}{} over {} episodes",
        summary.episodic_return,
        summary.value_estimation_error,
        summary.sigma_mean,
        summary
            .danger_occupancy
            .map(|d| format!(", danger occupancy {d:.4}"))
            .unwrap_or_default(),
        args.episodes
    );
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let (env, base) = resolve_run(args.env.as_deref(), args.config.as_deref(), &args.flags)?;
    let grid = SweepGrid {
        betas: parse_value_grid(&args.betas)?,
        actor_dropouts: args.actor_dropouts.clone(),
        critic_dropouts: args.critic_dropouts.clone(),
        seeds: args.seeds.clone(),
    };
    let out_dir = args
        .out
        .unwrap_or_else(|| out_root().join(format!("sweep-{env}-{}", unix_ms())));
    std::fs::create_dir_all(&out_dir)?;
    println!(
        "sweeping {} cells x {} seeds on {env} -> {}",
        grid.cells(),
        grid.seeds.len(),
        out_dir.display()
    );
    let cells = sweep::<f64>(&base, &grid, &env, Some(&out_dir))?;
    write_sweep_csv(&out_dir.join("sweep.csv"), &cells)?;
    print!("{}", sweep_table_string(&cells));
    Ok(EXIT_OK)
}

pub fn cmd_verify_theory(args: VerifyTheoryArgs) -> Result<i32> {
    if args.samples < 10_000 {
        eprintln!(
            "warning: {} samples is below the recommended 10000; confidence intervals will be wide",
            args.samples
        );
    }
    let config = SuiteConfig {
        instances: args.instances,
        samples: args.samples,
        seed: args.seed,
        alpha_tildes: args.alpha_tildes.clone(),
        beta_grid: parse_value_grid(&args.beta_grid)?,
        params: InstanceParams {
            sigma_max: args.sigma_max,
            sigma_const: args.sigma,
            ..InstanceParams::default()
        },
    };
    let outcome = run_suite(&config)?;
    print!("{outcome}");
    if let Some(path) = args.out {
        write_report_csv(&path, &outcome.rows)?;
        println!("slack report: {} rows -> {}", outcome.rows.len(), path.display());
    }
    if outcome.all_pass() {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_THEOREM_VIOLATION)
    }
}

pub fn cmd_export_heatmap(args: HeatmapArgs) -> Result<i32> {
    if args.steps == 0 {
        return Err(Error::usage("steps: must be positive"));
    }
    if args.grid == 0 {
        return Err(Error::usage("grid: must be positive"));
    }
    let (algo, model_env, _config) = load_model::<f64>(&args.model)?;
    let env_id = args.env.unwrap_or(model_env);
    let mut env = make_env::<f64>(&env_id)?;
    let mut rng = seeded(args.seed);
    let states = rollout_states(&algo, env.as_mut(), args.steps, &mut rng)?;
    // the built-in tasks are planar, so the danger geometry of the risky
    // variant doubles as the occupancy reference
    let (center, radius) = if env_id == RISKY_POINT_MASS_ID {
        let cfg = RiskyPointMass::<f64>::new(Default::default());
        (cfg.config().danger_center, cfg.config().danger_radius)
    } else {
        ([0.5, 0.5], 0.0)
    };
    let (fraction, grid) = danger_occupancy(&states, center, radius, args.grid)?;
    let out = args
        .out
        .unwrap_or_else(|| args.model.parent().unwrap_or(Path::new(".")).join("heatmap.csv"));
    grid.write_csv(&out)?;
    println!(
        "{}: {} positions into a {}x{} grid -> {}",
        env_id,
        grid.total(),
        args.grid,
        args.grid,
        out.display()
    );
    if radius > 0.0 {
        println!("danger occupancy: {fraction:.4}");
    }
    Ok(EXIT_OK)
}

fn seeded(seed: u64) -> ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

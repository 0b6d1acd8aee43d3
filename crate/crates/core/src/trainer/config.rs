//! Training configuration, file loading, per-environment presets, and the
//! run manifest.
//!
//! Precedence when resolving a run: command-line flags > config file >
//! per-environment preset > built-in defaults. The fully resolved
//! configuration is echoed into the manifest, and feeding a manifest back
//! in as the config file reproduces the run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    /// Single distributional critic with β-pessimistic targets.
    Stac,
    /// Twin scalar critics with min-clipped targets and squared-error loss.
    Sac,
    /// Twin distributional critics with min-clipped targets and NLL loss.
    Estac,
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmKind::Stac => "stac",
            AlgorithmKind::Sac => "sac",
            AlgorithmKind::Estac => "estac",
        })
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stac" => Ok(AlgorithmKind::Stac),
            "sac" => Ok(AlgorithmKind::Sac),
            "estac" => Ok(AlgorithmKind::Estac),
            other => Err(Error::config(format!(
                "algorithm: unknown value `{other}` (expected stac, sac, or estac)"
            ))),
        }
    }
}

/// All hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: AlgorithmKind,
    /// Pessimism coefficient scaling the σ penalty in targets and the actor
    /// objective.
    pub beta: f64,
    pub gamma: f64,
    /// Polyak coefficient: lagged ← ρ·lagged + (1−ρ)·online.
    pub rho: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    /// Entropy target H̄; `None` resolves to −action_dim at build time.
    pub target_entropy: Option<f64>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_starts: u64,
    /// Gradient phases per environment step.
    pub utd_ratio: u32,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub actor_dropout: f64,
    pub critic_dropout: f64,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    /// Uniform random actions until `learning_starts` environment steps.
    pub warmup_uniform: bool,
    /// Whether the lagged critic keeps dropout active while building TD
    /// targets.
    pub lagged_dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmKind::Stac,
            beta: 0.1,
            gamma: 0.99,
            rho: 0.995,
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            init_alpha: 1.0,
            target_entropy: None,
            buffer_capacity: 1_000_000,
            batch_size: 256,
            learning_starts: 10_000,
            utd_ratio: 1,
            total_steps: 50_000,
            eval_interval: 1_000,
            eval_episodes: 1,
            actor_dropout: 0.0,
            critic_dropout: 0.0,
            hidden_dims: vec![256, 256],
            seed: 0,
            warmup_uniform: true,
            lagged_dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::config(format!("beta: must be >= 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma: must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config(format!("rho: must lie in [0, 1], got {}", self.rho)));
        }
        for (name, lr) in
            [("critic_lr", self.critic_lr), ("actor_lr", self.actor_lr), ("alpha_lr", self.alpha_lr)]
        {
            if lr <= 0.0 || !lr.is_finite() {
                return Err(Error::config(format!("{name}: must be positive, got {lr}")));
            }
        }
        if self.init_alpha <= 0.0 {
            return Err(Error::config(format!(
                "init_alpha: must be positive, got {}",
                self.init_alpha
            )));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity: must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size: must be positive"));
        }
        if self.utd_ratio == 0 {
            return Err(Error::config("utd_ratio: must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps: must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval: must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes: must be at least 1"));
        }
        for (name, d) in [("actor_dropout", self.actor_dropout), ("critic_dropout", self.critic_dropout)]
        {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::config(format!("{name}: must lie in [0, 1), got {d}")));
            }
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden_dims: need at least one positive width"));
        }
        Ok(())
    }

    /// Entropy target, defaulting to −action_dim.
    pub fn resolved_target_entropy(&self, action_dim: usize) -> f64 {
        self.target_entropy
            .unwrap_or_else(|| crate::actor::default_target_entropy(action_dim))
    }
}

/// Partial configuration: unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub algorithm: Option<AlgorithmKind>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub critic_lr: Option<f64>,
    pub actor_lr: Option<f64>,
    pub alpha_lr: Option<f64>,
    pub init_alpha: Option<f64>,
    pub target_entropy: Option<f64>,
    pub buffer_capacity: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_starts: Option<u64>,
    pub utd_ratio: Option<u32>,
    pub total_steps: Option<u64>,
    pub eval_interval: Option<u64>,
    pub eval_episodes: Option<u32>,
    pub actor_dropout: Option<f64>,
    pub critic_dropout: Option<f64>,
    pub hidden_dims: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub warmup_uniform: Option<bool>,
    pub lagged_dropout: Option<bool>,
}

macro_rules! apply_fields {
    ($patch:expr, $cfg:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $patch.$field.clone() { $cfg.$field = v; })+
    };
}

impl ConfigPatch {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        apply_fields!(
            self, cfg, algorithm, beta, gamma, rho, critic_lr, actor_lr, alpha_lr, init_alpha,
            buffer_capacity, batch_size, learning_starts, utd_ratio, total_steps, eval_interval,
            eval_episodes, actor_dropout, critic_dropout, hidden_dims, seed, warmup_uniform,
            lagged_dropout,
        );
        if self.target_entropy.is_some() {
            cfg.target_entropy = self.target_entropy;
        }
    }
}

/// Desk-scale presets for the built-in environments: small networks, the
/// sweep-style dropout rate, and a mid-grid pessimism level for the risky
/// task.
pub fn env_preset(env_id: &str) -> ConfigPatch {
    match env_id {
        envs::RISKY_POINT_MASS_ID => ConfigPatch {
            beta: Some(0.25),
            hidden_dims: Some(vec![64, 64]),
            actor_dropout: Some(0.01),
            critic_dropout: Some(0.01),
            total_steps: Some(50_000),
            ..ConfigPatch::default()
        },
        envs::POINT_REACH_ID => ConfigPatch {
            beta: Some(0.1),
            hidden_dims: Some(vec![64, 64]),
            actor_dropout: Some(0.01),
            critic_dropout: Some(0.01),
            total_steps: Some(20_000),
            ..ConfigPatch::default()
        },
        _ => ConfigPatch::default(),
    }
}

/// Resolves defaults → env preset → file patch → flag patch, then validates.
pub fn resolve_config(
    env_id: &str,
    file: Option<&ConfigPatch>,
    flags: Option<&ConfigPatch>,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    env_preset(env_id).apply(&mut cfg);
    if let Some(patch) = file {
        patch.apply(&mut cfg);
    }
    if let Some(patch) = flags {
        patch.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A config file: an optional environment id plus a configuration patch.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub env: Option<String>,
    pub patch: ConfigPatch,
}

/// Loads a TOML config file. Accepts either a bare patch (optionally with an
/// `env` key) or a full run manifest (the patch is read from its `[config]`
/// table and the environment from `[run] env`).
pub fn load_config_file(path: &Path) -> Result<FileConfig> {
    let body = std::fs::read_to_string(path)?;
    let value: toml::Value = toml::from_str(&body)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let mut env = None;
    let table = if let Some(cfg) = value.get("config") {
        if let Some(run) = value.get("run") {
            env = run.get("env").and_then(|v| v.as_str()).map(String::from);
        }
        cfg.clone()
    } else {
        value
    };
    let mut table = match table {
        toml::Value::Table(t) => t,
        _ => return Err(Error::config("config file root must be a table")),
    };
    if let Some(v) = table.remove("env") {
        env = v.as_str().map(String::from);
    }
    let patch: ConfigPatch = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok(FileConfig { env, patch })
}

/// Metadata block of a run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub env: String,
    pub out_dir: String,
    pub scalar: String,
    pub code_version: String,
    pub created_unix_ms: u64,
}

/// Everything needed to reproduce a run: metadata plus the fully resolved
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: RunMeta,
    pub config: TrainConfig,
}

impl RunManifest {
    pub fn new(env: &str, out_dir: &Path, scalar: &str, config: TrainConfig) -> Self {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            run: RunMeta {
                env: env.to_string(),
                out_dir: out_dir.display().to_string(),
                scalar: scalar.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix_ms: now,
            },
            config,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = toml::to_string_pretty(self)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        toml::from_str(&body).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

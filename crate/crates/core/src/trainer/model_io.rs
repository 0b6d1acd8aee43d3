//! Model artifact: JSON file holding the actor, critic pair(s), temperature,
//! and the resolved configuration that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::algorithm::Algorithm;
use super::config::TrainConfig;
use crate::actor::{Policy, TemperatureState};
use crate::critic::CriticPair;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp, MlpSnapshot};
use crate::scalar::{as_f64, real, Real};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct CriticSnapshot<R> {
    pub online: MlpSnapshot<R>,
    pub lagged: MlpSnapshot<R>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ModelFile<R> {
    pub format_version: u32,
    pub scalar: String,
    pub env: String,
    pub config: TrainConfig,
    pub actor: MlpSnapshot<R>,
    pub critics: Vec<CriticSnapshot<R>>,
    pub log_alpha: f64,
    pub target_entropy: f64,
}

/// Serializes the agent to JSON at `path`.
pub fn save_model<R: Real>(
    path: &Path,
    algo: &Algorithm<R>,
    env: &str,
    config: &TrainConfig,
) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        scalar: R::NAME.to_string(),
        env: env.to_string(),
        config: config.clone(),
        actor: algo.actor.net.snapshot(),
        critics: algo
            .critics
            .iter()
            .map(|c| CriticSnapshot { online: c.online.snapshot(), lagged: c.lagged.snapshot() })
            .collect(),
        log_alpha: as_f64(algo.temperature.log_alpha.values()[0]),
        target_entropy: as_f64(algo.temperature.target_entropy),
    };
    let body = serde_json::to_string(&file).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, body)?;
    Ok(())
}

/// Restores an agent from a model file. Optimizer moments start fresh.
pub fn load_model<R: Real>(path: &Path) -> Result<(Algorithm<R>, String, TrainConfig)> {
    let body = std::fs::read_to_string(path)?;
    let file: ModelFile<R> =
        serde_json::from_str(&body).map_err(|e| Error::Serialization(e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::usage(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.scalar != R::NAME {
        return Err(Error::usage(format!(
            "model was saved with scalar {} but loaded as {}",
            file.scalar,
            R::NAME
        )));
    }
    let config = file.config.clone();
    config.validate()?;
    let actor = Policy::from_net(Mlp::restore(&file.actor)?)?;
    let mut critics = Vec::with_capacity(file.critics.len());
    for snap in &file.critics {
        critics.push(CriticPair {
            online: Mlp::restore(&snap.online)?,
            lagged: Mlp::restore(&snap.lagged)?,
        });
    }
    if critics.is_empty() {
        return Err(Error::usage("model file has no critics"));
    }
    let mut temperature =
        TemperatureState::new(file.log_alpha.exp(), real(file.target_entropy))?;
    temperature.log_alpha.values_mut()[0] = real(file.log_alpha);
    let algo = Algorithm::from_parts(
        config.algorithm,
        actor,
        critics,
        temperature,
        real(config.beta),
        AdamState::for_scalar(real(config.alpha_lr)),
        real(config.actor_lr),
        real(config.critic_lr),
    );
    Ok((algo, file.env, config))
}

//! End-to-end training loop, evaluation protocol, sweeps, and run
//! artifacts (metric CSV, manifest, model file).
//!
//! One run is strictly sequential: every environment step is followed by
//! `utd_ratio` gradient phases, each ordered targets → critic → actor →
//! temperature → Polyak. Evaluation episodes run every `eval_interval`
//! steps on a separate environment instance with deterministic actions and
//! dropout off. All randomness derives from the run seed through fixed,
//! independent stream ids, so a manifest rerun reproduces the metric stream
//! byte for byte.

mod algorithm;
mod config;
mod metrics;
mod model_io;
mod sweep;

pub use algorithm::Algorithm;
pub use config::{
    env_preset, load_config_file, resolve_config, AlgorithmKind, ConfigPatch, FileConfig,
    RunManifest, RunMeta, TrainConfig,
};
pub use metrics::{CsvMetricSink, EvalRecord, EvalSink, NullSink, METRICS_HEADER};
pub use model_io::{load_model, save_model, ModelFile, MODEL_FORMAT_VERSION};
pub use sweep::{
    final_window, interquartile_mean, sweep, sweep_table_string, write_sweep_csv, SweepCell,
    SweepGrid,
};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::nn::{uniform_action, Mode};
use crate::replay::{ReplayBuffer, Transition};
use crate::scalar::{as_f64, real, Real};

/// Fixed RNG stream ids derived from the run seed.
mod streams {
    pub const INIT: u64 = 0;
    pub const ENV: u64 = 1;
    pub const ACT: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const LEARN_ACTIONS: u64 = 4;
    pub const LEARN_DROPOUT: u64 = 5;
    pub const EVAL_BASE: u64 = 1_000_000;
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Positions in one gradient phase, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    TargetsBuilt,
    CriticUpdated,
    ActorUpdated,
    TemperatureUpdated,
    PolyakApplied,
    Evaluated,
}

/// Test/diagnostic hook called after each phase with the current agent.
pub trait TrainObserver<R: Real> {
    fn on_phase(&mut self, phase: Phase, algo: &Algorithm<R>);
}

/// Observer that does nothing.
pub struct NoopObserver;

impl<R: Real> TrainObserver<R> for NoopObserver {
    fn on_phase(&mut self, _phase: Phase, _algo: &Algorithm<R>) {}
}

#[derive(Debug)]
pub struct TrainResult<R: Real> {
    pub algorithm: Algorithm<R>,
    pub records: Vec<EvalRecord>,
    pub env_steps: u64,
    pub gradient_phases: u64,
    /// Environment step at which the first gradient phase ran.
    pub first_gradient_env_step: Option<u64>,
}

/// Runs the full training loop on a registered environment.
pub fn train<R: Real>(
    config: &TrainConfig,
    env_id: &str,
    sink: &mut dyn EvalSink,
) -> Result<TrainResult<R>> {
    train_observed(config, env_id, sink, &mut NoopObserver)
}

/// [`train`] with a phase observer.
pub fn train_observed<R: Real>(
    config: &TrainConfig,
    env_id: &str,
    sink: &mut dyn EvalSink,
    observer: &mut dyn TrainObserver<R>,
) -> Result<TrainResult<R>> {
    config.validate()?;
    let mut env = make_env::<R>(env_id)?;
    let mut eval_env = make_env::<R>(env_id)?;
    let spec = env.spec().clone();

    let mut init_rng = stream(config.seed, streams::INIT);
    let mut env_rng = stream(config.seed, streams::ENV);
    let mut act_rng = stream(config.seed, streams::ACT);
    let mut batch_rng = stream(config.seed, streams::BATCH);
    let mut learn_act_rng = stream(config.seed, streams::LEARN_ACTIONS);
    let mut learn_drop_rng = stream(config.seed, streams::LEARN_DROPOUT);

    let mut algo = Algorithm::<R>::build(config, &spec, &mut init_rng)?;
    let mut buffer =
        ReplayBuffer::<R>::new(config.buffer_capacity, spec.state_dim, spec.action_dim)?;

    let started = Instant::now();
    let mut state = env.reset(&mut env_rng);
    let mut records = Vec::new();
    let mut gradient_phases = 0u64;
    let mut first_gradient_env_step = None;
    let mut last_critic_loss = 0.0f64;
    let mut last_actor_loss = 0.0f64;
    let mut eval_idx = 0u64;

    for step in 1..=config.total_steps {
        let action = if config.warmup_uniform && step <= config.learning_starts {
            uniform_action::<R>(spec.action_dim, &mut act_rng)
        } else {
            algo.actor.act(&state, Mode::Train, &mut act_rng)?.0
        };
        let outcome = env.step(&action, &mut env_rng)?;
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: outcome.reward,
            // time-limit truncations bootstrap, so only true terminations
            // mask the target
            done: outcome.terminated,
            next_state: outcome.state.clone(),
        })?;
        state = if outcome.terminated || outcome.truncated {
            env.reset(&mut env_rng)
        } else {
            outcome.state
        };

        if step >= config.learning_starts {
            for _ in 0..config.utd_ratio {
                let idx = buffer.sample_indices(config.batch_size, &mut batch_rng)?;
                let batch: Vec<&Transition<R>> = idx.iter().map(|&i| buffer.get(i)).collect();
                let phase = (|| -> Result<(f64, f64, f64)> {
                    let targets =
                        algo.td_targets(&batch, config, &mut learn_act_rng, &mut learn_drop_rng)?;
                    observer.on_phase(Phase::TargetsBuilt, &algo);
                    let critic_loss =
                        algo.update_critics(&batch, &targets, &mut learn_drop_rng)?;
                    observer.on_phase(Phase::CriticUpdated, &algo);
                    let (actor_loss, logps) =
                        algo.update_actor(&batch, &mut learn_act_rng, &mut learn_drop_rng)?;
                    observer.on_phase(Phase::ActorUpdated, &algo);
                    let temp_loss = algo.update_temperature(&logps)?;
                    observer.on_phase(Phase::TemperatureUpdated, &algo);
                    algo.polyak(real(config.rho))?;
                    observer.on_phase(Phase::PolyakApplied, &algo);
                    Ok((critic_loss, actor_loss, temp_loss))
                })();
                match phase {
                    Ok((closs, aloss, _)) => {
                        last_critic_loss = closs;
                        last_actor_loss = aloss;
                    }
                    Err(Error::TrainingHealth(detail)) => {
                        return Err(Error::Diverged {
                            step,
                            detail: format!("{detail}; alpha {}", as_f64(algo.alpha())),
                        });
                    }
                    Err(other) => return Err(other),
                }
                gradient_phases += 1;
                first_gradient_env_step.get_or_insert(step);
            }
        }

        if step % config.eval_interval == 0 {
            let mut eval_rng = stream(config.seed, streams::EVAL_BASE + eval_idx);
            let summary = evaluate(
                &algo,
                eval_env.as_mut(),
                config.gamma,
                config.eval_episodes,
                &mut eval_rng,
            )?;
            let rec = EvalRecord {
                env_step: step,
                episodic_return: summary.episodic_return,
                value_estimation_error: summary.value_estimation_error,
                danger_occupancy: summary.danger_occupancy,
                wall_time_s: started.elapsed().as_secs_f64(),
                alpha: as_f64(algo.alpha()),
                critic_loss: last_critic_loss,
                actor_loss: last_actor_loss,
                sigma_mean: summary.sigma_mean,
            };
            sink.on_record(&rec)?;
            records.push(rec);
            observer.on_phase(Phase::Evaluated, &algo);
            eval_idx += 1;
        }
    }

    Ok(TrainResult {
        algorithm: algo,
        records,
        env_steps: config.total_steps,
        gradient_phases,
        first_gradient_env_step,
    })
}

/// Aggregated outcome of a batch of evaluation episodes.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub episodic_return: f64,
    pub value_estimation_error: f64,
    pub danger_occupancy: Option<f64>,
    pub sigma_mean: f64,
}

/// Runs deterministic evaluation episodes: actions are tanh(mean), dropout
/// is off, and the value-estimation error compares the online critic's
/// prediction at each visited (s, a) with the discounted return realized
/// from that point to the end of the episode.
pub fn evaluate<R: Real>(
    algo: &Algorithm<R>,
    env: &mut dyn Env<R>,
    gamma: f64,
    n_episodes: u32,
    rng: &mut ChaCha8Rng,
) -> Result<EvalSummary> {
    let mut returns = 0.0;
    let mut value_error = 0.0;
    let mut sigma_sum = 0.0;
    let mut sigma_count = 0usize;
    let mut danger_hits = 0usize;
    let mut danger_total = 0usize;
    let mut env_has_danger = false;
    for _ in 0..n_episodes {
        let mut state = env.reset(rng);
        let mut rewards: Vec<f64> = Vec::new();
        let mut predictions: Vec<f64> = Vec::new();
        loop {
            let (action, _) = algo.actor.act(&state, Mode::Eval, rng)?;
            predictions.push(algo.value_estimate(&state, &action)?);
            sigma_sum += algo.sigma_estimate(&state, &action)?;
            sigma_count += 1;
            let outcome = env.step(&action, rng)?;
            rewards.push(as_f64(outcome.reward));
            if let Some(hit) = env.in_danger(&outcome.state) {
                env_has_danger = true;
                danger_total += 1;
                if hit {
                    danger_hits += 1;
                }
            }
            state = outcome.state;
            if outcome.terminated || outcome.truncated {
                break;
            }
        }
        returns += rewards.iter().sum::<f64>();
        // realized discounted return from each step to the episode end
        let mut suffix = vec![0.0f64; rewards.len()];
        let mut acc = 0.0;
        for (i, &r) in rewards.iter().enumerate().rev() {
            acc = r + gamma * acc;
            suffix[i] = acc;
        }
        let ep_error: f64 = predictions
            .iter()
            .zip(&suffix)
            .map(|(p, g)| p - g)
            .sum::<f64>()
            / rewards.len() as f64;
        value_error += ep_error;
    }
    let n = n_episodes as f64;
    Ok(EvalSummary {
        episodic_return: returns / n,
        value_estimation_error: value_error / n,
        danger_occupancy: if env_has_danger {
            Some(danger_hits as f64 / danger_total.max(1) as f64)
        } else {
            None
        },
        sigma_mean: if sigma_count > 0 { sigma_sum / sigma_count as f64 } else { 0.0 },
    })
}

/// Rolls the deterministic policy for `n_steps` environment steps, resetting
/// at episode boundaries, and returns every visited post-step state.
pub fn rollout_states<R: Real>(
    algo: &Algorithm<R>,
    env: &mut dyn Env<R>,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<R>>> {
    let mut out = Vec::with_capacity(n_steps);
    let mut state = env.reset(rng);
    for _ in 0..n_steps {
        let (action, _) = algo.actor.act(&state, Mode::Eval, rng)?;
        let outcome = env.step(&action, rng)?;
        out.push(outcome.state.clone());
        state = if outcome.terminated || outcome.truncated {
            env.reset(rng)
        } else {
            outcome.state
        };
    }
    Ok(out)
}

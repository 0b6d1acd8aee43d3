//! Algorithm instances: the pessimistic single-critic learner plus the two
//! min-clipping baselines, sharing actor, temperature, and target plumbing.

use rand::RngCore;

use super::config::{AlgorithmKind, TrainConfig};
use crate::actor::{
    actor_loss, temperature_loss_from_logps, CriticObjective, Policy, TemperatureState,
};
use crate::critic::{self, critic_input, CriticPair};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{adam_step_params, AdamState, Mlp, Mode, Tape};
use crate::replay::Transition;
use crate::scalar::{as_f64, real, Real};

/// One trainable agent: actor, critic bank, temperature, and their
/// optimizer states.
#[derive(Debug, Clone)]
pub struct Algorithm<R: Real> {
    pub kind: AlgorithmKind,
    pub actor: Policy<R>,
    /// One pair for the pessimistic learner, two for the min-clipping
    /// baselines.
    pub critics: Vec<CriticPair<R>>,
    pub temperature: TemperatureState<R>,
    pub beta: R,
    actor_opt: AdamState<R>,
    critic_opts: Vec<AdamState<R>>,
    temp_opt: AdamState<R>,
}

impl<R: Real> Algorithm<R> {
    /// Builds actor, critics, and optimizer state for the configured
    /// algorithm. Network init draws from `rng` in a fixed order.
    pub fn build(config: &TrainConfig, spec: &EnvSpec, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let (d_s, d_a) = (spec.state_dim, spec.action_dim);
        let actor = Policy::new(d_s, d_a, &config.hidden_dims, config.actor_dropout, rng)?;
        let (n_critics, distributional) = match config.algorithm {
            AlgorithmKind::Stac => (1, true),
            AlgorithmKind::Sac => (2, false),
            AlgorithmKind::Estac => (2, true),
        };
        let mut critics = Vec::with_capacity(n_critics);
        for _ in 0..n_critics {
            critics.push(CriticPair::new(
                d_s,
                d_a,
                &config.hidden_dims,
                config.critic_dropout,
                distributional,
                rng,
            )?);
        }
        let temperature = TemperatureState::new(
            config.init_alpha,
            real(config.resolved_target_entropy(d_a)),
        )?;
        let actor_opt = AdamState::for_mlp(&actor.net, real(config.actor_lr));
        let critic_opts = critics
            .iter()
            .map(|c| AdamState::for_mlp(&c.online, real(config.critic_lr)))
            .collect();
        let temp_opt = AdamState::for_scalar(real(config.alpha_lr));
        Ok(Self {
            kind: config.algorithm,
            actor,
            critics,
            temperature,
            beta: real(config.beta),
            actor_opt,
            critic_opts,
            temp_opt,
        })
    }

    /// Reassembles an agent from existing networks (model loading); the
    /// optimizer moments start from zero.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn from_parts(
        kind: AlgorithmKind,
        actor: Policy<R>,
        critics: Vec<CriticPair<R>>,
        temperature: TemperatureState<R>,
        beta: R,
        temp_opt: AdamState<R>,
        actor_lr: R,
        critic_lr: R,
    ) -> Self {
        let actor_opt = AdamState::for_mlp(&actor.net, actor_lr);
        let critic_opts =
            critics.iter().map(|c| AdamState::for_mlp(&c.online, critic_lr)).collect();
        Self { kind, actor, critics, temperature, beta, actor_opt, critic_opts, temp_opt }
    }

    pub fn distributional(&self) -> bool {
        matches!(self.kind, AlgorithmKind::Stac | AlgorithmKind::Estac)
    }

    pub fn alpha(&self) -> R {
        self.temperature.alpha()
    }

    /// Total parameter count across online critics.
    pub fn critic_param_count(&self) -> usize {
        self.critics.iter().map(|c| c.param_count()).sum()
    }

    /// Builds detached TD targets for the current batch, sampling one fresh
    /// next action per transition. The action noise stream is kept separate
    /// from the dropout stream so identical seeds give identical ã′ across
    /// algorithms.
    pub fn td_targets(
        &self,
        batch: &[&Transition<R>],
        config: &TrainConfig,
        action_rng: &mut dyn RngCore,
        dropout_rng: &mut dyn RngCore,
    ) -> Result<Vec<R>> {
        let alpha = self.alpha();
        let gamma = real::<R>(config.gamma);
        let lagged_mode = if config.lagged_dropout { Mode::Train } else { Mode::Eval };
        match self.kind {
            AlgorithmKind::Stac => critic::td_target(
                batch,
                &self.actor,
                &self.critics[0].lagged,
                alpha,
                self.beta,
                gamma,
                lagged_mode,
                action_rng,
                dropout_rng,
            ),
            AlgorithmKind::Sac | AlgorithmKind::Estac => {
                let mut targets = Vec::with_capacity(batch.len());
                for t in batch {
                    let sample = self.actor.sample_detailed(
                        &t.next_state,
                        Mode::Train,
                        action_rng,
                        dropout_rng,
                    )?;
                    let mut min_mu: Option<R> = None;
                    for pair in &self.critics {
                        let out = pair.lagged.infer(
                            &critic_input(&t.next_state, &sample.action),
                            lagged_mode,
                            dropout_rng,
                        )?;
                        let mu = out[0];
                        min_mu = Some(match min_mu {
                            Some(m) => m.min(mu),
                            None => mu,
                        });
                    }
                    let continuation = min_mu.unwrap() - alpha * sample.log_prob;
                    targets.push(critic::bootstrap(t.reward, gamma, continuation, t.done));
                }
                Ok(targets)
            }
        }
    }

    /// One critic gradient step per critic against the shared targets.
    /// Returns the mean loss across critics.
    pub fn update_critics(
        &mut self,
        batch: &[&Transition<R>],
        targets: &[R],
        dropout_rng: &mut dyn RngCore,
    ) -> Result<f64> {
        let mut total = 0.0f64;
        match self.kind {
            AlgorithmKind::Stac | AlgorithmKind::Estac => {
                for (pair, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
                    let loss = critic::critic_loss(
                        batch,
                        targets,
                        &mut pair.online,
                        Mode::Train,
                        dropout_rng,
                    )?;
                    let lf = as_f64(loss);
                    if !lf.is_finite() {
                        return Err(Error::TrainingHealth(format!(
                            "critic loss {lf} (grad l2 {:.3e})",
                            pair.online.grad_l2()
                        )));
                    }
                    pair.online.adam_step(opt)?;
                    total += lf;
                }
            }
            AlgorithmKind::Sac => {
                for (pair, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
                    let loss =
                        scalar_mse_loss(batch, targets, &mut pair.online, dropout_rng)?;
                    let lf = as_f64(loss);
                    if !lf.is_finite() {
                        return Err(Error::TrainingHealth(format!(
                            "critic loss {lf} (grad l2 {:.3e})",
                            pair.online.grad_l2()
                        )));
                    }
                    pair.online.adam_step(opt)?;
                    total += lf;
                }
            }
        }
        Ok(total / self.critics.len() as f64)
    }

    /// One actor gradient step; returns the loss and the detached
    /// log-probabilities of the sampled actions.
    pub fn update_actor(
        &mut self,
        batch: &[&Transition<R>],
        noise_rng: &mut dyn RngCore,
        dropout_rng: &mut dyn RngCore,
    ) -> Result<(f64, Vec<R>)> {
        let states: Vec<&[R]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let alpha = self.alpha();
        let (loss, logps) = match self.kind {
            AlgorithmKind::Stac => actor_loss(
                &states,
                &mut self.actor,
                CriticObjective::Pessimistic { critic: &self.critics[0].online, beta: self.beta },
                alpha,
                Mode::Train,
                noise_rng,
                dropout_rng,
            )?,
            AlgorithmKind::Sac | AlgorithmKind::Estac => {
                let nets: Vec<&Mlp<R>> = self.critics.iter().map(|c| &c.online).collect();
                actor_loss(
                    &states,
                    &mut self.actor,
                    CriticObjective::MinMean { critics: &nets },
                    alpha,
                    Mode::Train,
                    noise_rng,
                    dropout_rng,
                )?
            }
        };
        let lf = as_f64(loss);
        if !lf.is_finite() {
            return Err(Error::TrainingHealth(format!(
                "actor loss {lf} (grad l2 {:.3e})",
                self.actor.net.grad_l2()
            )));
        }
        self.actor.net.adam_step(&mut self.actor_opt)?;
        Ok((lf, logps))
    }

    /// Temperature update on the detached log-probabilities from the actor
    /// step. Returns the temperature loss.
    pub fn update_temperature(&mut self, logps: &[R]) -> Result<f64> {
        let (loss, _, dlog) = temperature_loss_from_logps(logps, &self.temperature);
        let lf = as_f64(loss);
        if !lf.is_finite() {
            return Err(Error::TrainingHealth(format!("temperature loss {lf}")));
        }
        self.temperature.log_alpha.grad_mut()[0] = dlog;
        adam_step_params(&mut [&mut self.temperature.log_alpha], &mut self.temp_opt)?;
        Ok(lf)
    }

    /// Polyak-averages every online critic into its lagged copy.
    pub fn polyak(&mut self, rho: R) -> Result<()> {
        for pair in &mut self.critics {
            pair.polyak(rho)?;
        }
        Ok(())
    }

    /// Deployed value estimate at (s, a), eval mode: the critic mean for the
    /// pessimistic learner, the min mean for the twin baselines.
    pub fn value_estimate(&self, state: &[R], action: &[R]) -> Result<f64> {
        let mut rng = crate::scalar::NullRng;
        let mut value: Option<f64> = None;
        for pair in &self.critics {
            let out = pair.online.infer(&critic_input(state, action), Mode::Eval, &mut rng)?;
            let mu = as_f64(out[0]);
            value = Some(match value {
                Some(v) => v.min(mu),
                None => mu,
            });
        }
        Ok(value.expect("at least one critic"))
    }

    /// Mean aleatoric σ estimate at (s, a) across distributional critics;
    /// zero for scalar critics.
    pub fn sigma_estimate(&self, state: &[R], action: &[R]) -> Result<f64> {
        if !self.distributional() {
            return Ok(0.0);
        }
        let mut rng = crate::scalar::NullRng;
        let mut total = 0.0;
        for pair in &self.critics {
            let v = critic::critic_eval(&pair.online, state, action, Mode::Eval, &mut rng)?;
            total += as_f64(v.sigma);
        }
        Ok(total / self.critics.len() as f64)
    }

    /// Hash of all lagged critic parameters, for target-hygiene checks.
    pub fn lagged_hash(&self) -> u64 {
        crate::scalar::hash_bits(
            self.critics
                .iter()
                .flat_map(|c| c.lagged.params().into_iter().flat_map(|p| p.values().to_vec())),
        )
    }
}

/// Squared-error critic loss for scalar value heads:
/// mean((μ(s,a) − y)²), gradients into the online network.
fn scalar_mse_loss<R: Real>(
    batch: &[&Transition<R>],
    targets: &[R],
    online: &mut Mlp<R>,
    dropout_rng: &mut dyn RngCore,
) -> Result<R> {
    if batch.len() != targets.len() {
        return Err(Error::dim("batch and target lengths differ"));
    }
    if batch.is_empty() {
        return Err(Error::usage("critic loss needs a non-empty batch"));
    }
    for (i, q) in targets.iter().enumerate() {
        if !q.is_finite() {
            return Err(Error::TrainingHealth(format!(
                "non-finite TD target at transition index {i}: {q}"
            )));
        }
    }
    let inv_n = real::<R>(1.0 / batch.len() as f64);
    let two = real::<R>(2.0);
    let mut loss = R::zero();
    let mut tape = Tape::new();
    for (t, &y) in batch.iter().zip(targets) {
        let out = online.forward_tape(
            &critic_input(&t.state, &t.action),
            Mode::Train,
            dropout_rng,
            &mut tape,
        )?;
        let resid = out[0] - y;
        loss += resid * resid;
        online.backward(&tape, &[two * resid * inv_n])?;
    }
    Ok(loss * inv_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn spec() -> EnvSpec {
        EnvSpec { state_dim: 2, action_dim: 2, max_episode_steps: 100 }
    }

    fn config(kind: AlgorithmKind) -> TrainConfig {
        TrainConfig {
            algorithm: kind,
            hidden_dims: vec![8, 8],
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    fn toy_batch() -> Vec<Transition<f64>> {
        (0..4)
            .map(|i| Transition {
                state: vec![0.1 * i as f64, 0.2],
                action: vec![0.3, -0.1],
                reward: 0.5 - 0.1 * i as f64,
                next_state: vec![0.15 * i as f64, 0.25],
                done: i == 3,
            })
            .collect()
    }

    #[test]
    fn critic_counts_per_algorithm() {
        let stac = Algorithm::<f64>::build(&config(AlgorithmKind::Stac), &spec(), &mut rng(1)).unwrap();
        let sac = Algorithm::<f64>::build(&config(AlgorithmKind::Sac), &spec(), &mut rng(1)).unwrap();
        let estac = Algorithm::<f64>::build(&config(AlgorithmKind::Estac), &spec(), &mut rng(1)).unwrap();
        assert_eq!(stac.critics.len(), 1);
        assert_eq!(sac.critics.len(), 2);
        assert_eq!(estac.critics.len(), 2);
        // twin distributional critics double the parameter count exactly
        assert_eq!(estac.critic_param_count(), 2 * stac.critic_param_count());
        assert!(stac.distributional());
        assert!(!sac.distributional());
    }

    #[test]
    fn identical_twin_critics_make_min_a_noop() {
        // both SAC critics forced identical: targets equal the single-critic
        // form computed directly
        let cfg = config(AlgorithmKind::Sac);
        let mut algo = Algorithm::<f64>::build(&cfg, &spec(), &mut rng(5)).unwrap();
        let snap = algo.critics[0].online.snapshot();
        algo.critics[1].online = Mlp::restore(&snap).unwrap();
        algo.critics[1].lagged = Mlp::restore(&snap).unwrap();
        algo.critics[0].lagged = Mlp::restore(&snap).unwrap();

        let batch_owned = toy_batch();
        let batch: Vec<&Transition<f64>> = batch_owned.iter().collect();
        let targets =
            algo.td_targets(&batch, &cfg, &mut rng(11), &mut rng(12)).unwrap();

        // single-critic reference: same actor draws, one lagged net
        let alpha = algo.alpha();
        let mut action_rng = rng(11);
        let mut drop_rng = rng(12);
        for (t, &target) in batch.iter().zip(&targets) {
            let sample = algo
                .actor
                .sample_detailed(&t.next_state, Mode::Train, &mut action_rng, &mut drop_rng)
                .unwrap();
            let out = algo.critics[0]
                .lagged
                .infer(&critic_input(&t.next_state, &sample.action), Mode::Train, &mut drop_rng)
                .unwrap();
            // second critic consumes its dropout draws in the real path
            let _ = algo.critics[1]
                .lagged
                .infer(&critic_input(&t.next_state, &sample.action), Mode::Train, &mut drop_rng)
                .unwrap();
            let expected =
                critic::bootstrap(t.reward, 0.99, out[0] - alpha * sample.log_prob, t.done);
            assert_eq!(target, expected);
        }
    }

    #[test]
    fn one_training_phase_runs_for_every_algorithm() {
        for kind in [AlgorithmKind::Stac, AlgorithmKind::Sac, AlgorithmKind::Estac] {
            let cfg = config(kind);
            let mut algo = Algorithm::<f64>::build(&cfg, &spec(), &mut rng(7)).unwrap();
            let batch_owned = toy_batch();
            let batch: Vec<&Transition<f64>> = batch_owned.iter().collect();
            let targets = algo.td_targets(&batch, &cfg, &mut rng(1), &mut rng(2)).unwrap();
            assert!(targets.iter().all(|t| t.is_finite()));
            let closs = algo.update_critics(&batch, &targets, &mut rng(3)).unwrap();
            assert!(closs.is_finite());
            let (aloss, logps) = algo.update_actor(&batch, &mut rng(4), &mut rng(5)).unwrap();
            assert!(aloss.is_finite());
            let tloss = algo.update_temperature(&logps).unwrap();
            assert!(tloss.is_finite());
            algo.polyak(0.995).unwrap();
            // value estimate works and sigma is zero only for scalar critics
            let v = algo.value_estimate(&[0.1, 0.2], &[0.0, 0.0]).unwrap();
            assert!(v.is_finite());
            let s = algo.sigma_estimate(&[0.1, 0.2], &[0.0, 0.0]).unwrap();
            if kind == AlgorithmKind::Sac {
                assert_eq!(s, 0.0);
            } else {
                assert!(s > 0.0);
            }
        }
    }

    #[test]
    fn lagged_hash_changes_only_on_polyak() {
        let cfg = config(AlgorithmKind::Stac);
        let mut algo = Algorithm::<f64>::build(&cfg, &spec(), &mut rng(9)).unwrap();
        let batch_owned = toy_batch();
        let batch: Vec<&Transition<f64>> = batch_owned.iter().collect();
        let h0 = algo.lagged_hash();
        let targets = algo.td_targets(&batch, &cfg, &mut rng(1), &mut rng(2)).unwrap();
        assert_eq!(algo.lagged_hash(), h0);
        algo.update_critics(&batch, &targets, &mut rng(3)).unwrap();
        assert_eq!(algo.lagged_hash(), h0);
        let (_, logps) = algo.update_actor(&batch, &mut rng(4), &mut rng(5)).unwrap();
        algo.update_temperature(&logps).unwrap();
        assert_eq!(algo.lagged_hash(), h0);
        algo.polyak(0.995).unwrap();
        assert_ne!(algo.lagged_hash(), h0);
    }
}

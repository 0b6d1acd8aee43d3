//! Distributional critic: a Gaussian value head over state-action inputs,
//! its lagged copy for TD targets, the β-pessimistic target itself, and the
//! negative log-likelihood critic loss.

use rand::RngCore;

use crate::actor::Policy;
use crate::dist::{critic_sigma, critic_sigma_grad, gaussian_nll, gaussian_nll_grad};
use crate::error::{Error, Result};
use crate::nn::{self, Mlp, Mode, Tape};
use crate::replay::Transition;
use crate::scalar::{real, Real};

/// Critic output for one (s, a): expected soft value and the one-step
/// aleatoric standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianValue<R> {
    pub mu: R,
    pub sigma: R,
}

/// Online network plus its lagged copy. The lagged parameters change only
/// through Polyak averaging, never through gradients.
#[derive(Debug, Clone)]
pub struct CriticPair<R> {
    pub online: Mlp<R>,
    pub lagged: Mlp<R>,
}

impl<R: Real> CriticPair<R> {
    /// Builds the critic pair with the lagged copy initialized to the online
    /// weights.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        dropout: f64,
        distributional: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let spec = nn::critic_spec(state_dim, action_dim, hidden, dropout, distributional);
        let online = Mlp::new(spec, rng)?;
        let lagged = online.clone();
        Ok(Self { online, lagged })
    }

    pub fn polyak(&mut self, rho: R) -> Result<()> {
        nn::polyak_update(&mut self.lagged, &self.online, rho)
    }

    pub fn param_count(&self) -> usize {
        self.online.param_count()
    }
}

/// Concatenates state and action into the critic input layout.
pub fn critic_input<R: Real>(state: &[R], action: &[R]) -> Vec<R> {
    let mut input = Vec::with_capacity(state.len() + action.len());
    input.extend_from_slice(state);
    input.extend_from_slice(action);
    input
}

/// Evaluates a distributional critic head: component 0 is μ, component 1 is
/// mapped to σ through the softplus floor.
pub fn critic_eval<R: Real>(
    net: &Mlp<R>,
    state: &[R],
    action: &[R],
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<GaussianValue<R>> {
    let out = net.infer(&critic_input(state, action), mode, rng)?;
    head_to_value(&out)
}

/// Same as [`critic_eval`] but recording a tape for backward.
pub fn critic_eval_tape<R: Real>(
    net: &Mlp<R>,
    state: &[R],
    action: &[R],
    mode: Mode,
    rng: &mut dyn RngCore,
    tape: &mut Tape<R>,
) -> Result<(GaussianValue<R>, R)> {
    let out = net.forward_tape(&critic_input(state, action), mode, rng, tape)?;
    Ok((head_to_value(&out)?, out[1]))
}

fn head_to_value<R: Real>(out: &[R]) -> Result<GaussianValue<R>> {
    if out.len() != 2 {
        return Err(Error::dim(format!(
            "distributional critic head must emit 2 values, got {}",
            out.len()
        )));
    }
    Ok(GaussianValue { mu: out[0], sigma: critic_sigma(out[1]) })
}

/// β-pessimistic one-step TD target:
/// Q_i = r_i + γ·(μ̄(s′, ã′) − β·σ̄(s′, ã′) − α·log π(ã′|s′))·(¬done_i),
/// with ã′ freshly sampled from the current actor at s′. Pure values — no
/// gradient can flow into the lagged critic or the actor through the target.
#[allow(clippy::too_many_arguments)]
pub fn td_target<R: Real>(
    batch: &[&Transition<R>],
    actor: &Policy<R>,
    critic_lagged: &Mlp<R>,
    alpha: R,
    beta: R,
    gamma: R,
    lagged_mode: Mode,
    actor_rng: &mut dyn RngCore,
    dropout_rng: &mut dyn RngCore,
) -> Result<Vec<R>> {
    if beta < R::zero() {
        return Err(Error::domain(format!("beta must be non-negative, got {beta}")));
    }
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let sample = actor.sample_detailed(&t.next_state, Mode::Train, actor_rng, dropout_rng)?;
        let value = critic_eval(critic_lagged, &t.next_state, &sample.action, lagged_mode, dropout_rng)?;
        let continuation = value.mu - beta * value.sigma - alpha * sample.log_prob;
        targets.push(bootstrap(t.reward, gamma, continuation, t.done));
    }
    Ok(targets)
}

/// r + γ·continuation·(¬done); shared by every algorithm's target builder so
/// identical inputs produce bit-identical targets.
#[inline]
pub fn bootstrap<R: Real>(reward: R, gamma: R, continuation: R, done: bool) -> R {
    if done {
        reward
    } else {
        reward + gamma * continuation
    }
}

/// Mean Gaussian NLL of the online critic against detached targets;
/// accumulates gradients into the online network only and returns the loss.
pub fn critic_loss<R: Real>(
    batch: &[&Transition<R>],
    targets: &[R],
    online: &mut Mlp<R>,
    mode: Mode,
    rng: &mut dyn RngCore,
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
    let mut loss = R::zero();
    let mut tape = Tape::new();
    for (t, &q) in batch.iter().zip(targets) {
        let out = online.forward_tape(&critic_input(&t.state, &t.action), mode, rng, &mut tape)?;
        let (mu, pre) = (out[0], out[1]);
        let sigma = critic_sigma(pre);
        loss += gaussian_nll(mu, sigma, q)?;
        let (dmu, dsigma) = gaussian_nll_grad(mu, sigma, q);
        let head_grad = [dmu * inv_n, dsigma * critic_sigma_grad(pre) * inv_n];
        online.backward(&tape, &head_grad)?;
    }
    Ok(loss * inv_n)
}

#[cfg(test)]
#[path = "critic_tests.rs"]
mod tests;

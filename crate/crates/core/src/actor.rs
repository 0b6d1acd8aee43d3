//! Squashed-Gaussian policy, the pessimistic actor objective, and automatic
//! temperature tuning.

use rand::RngCore;

use crate::dist::{
    actor_sigma_grad, critic_sigma, critic_sigma_grad, split_policy_head,
    squashed_from_noise, squashed_log_prob_grads, SquashedSample,
};
use crate::error::{Error, Result};
use crate::nn::{self, Mlp, Mode, ParamTensor, Tape};
use crate::scalar::{real, Real};

/// Policy network: head emits d_a means followed by d_a pre-std values.
#[derive(Debug, Clone)]
pub struct Policy<R> {
    pub net: Mlp<R>,
    action_dim: usize,
}

impl<R: Real> Policy<R> {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let spec = nn::actor_spec(state_dim, action_dim, hidden, dropout);
        Ok(Self { net: Mlp::new(spec, rng)?, action_dim })
    }

    pub fn from_net(net: Mlp<R>) -> Result<Self> {
        if net.spec().output_dim % 2 != 0 {
            return Err(Error::dim("policy head must emit 2*d_a values"));
        }
        let action_dim = net.spec().output_dim / 2;
        Ok(Self { net, action_dim })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// One action plus its log-density. Train mode samples with dropout
    /// active; eval mode returns tanh(mean) with dropout off.
    pub fn act(&self, state: &[R], mode: Mode, rng: &mut dyn RngCore) -> Result<(Vec<R>, R)> {
        match mode {
            Mode::Eval => {
                let out = self.net.infer(state, Mode::Eval, rng)?;
                let (mean, sigma) = split_policy_head(&out)?;
                let zeros = vec![R::zero(); mean.len()];
                let s = squashed_from_noise(mean, sigma, zeros);
                Ok((s.action, s.log_prob))
            }
            Mode::Train => {
                let out = self.net.infer(state, Mode::Train, rng)?;
                let (mean, sigma) = split_policy_head(&out)?;
                let noise: Vec<R> = (0..mean.len()).map(|_| R::standard_normal(rng)).collect();
                let s = squashed_from_noise(mean, sigma, noise);
                Ok((s.action, s.log_prob))
            }
        }
    }

    /// Full reparameterized sample with separated noise and dropout streams,
    /// so callers that need bit-reproducible action draws can keep the noise
    /// stream independent of how much dropout the surrounding nets consume.
    pub fn sample_detailed(
        &self,
        state: &[R],
        mode: Mode,
        noise_rng: &mut dyn RngCore,
        dropout_rng: &mut dyn RngCore,
    ) -> Result<SquashedSample<R>> {
        let out = self.net.infer(state, mode, dropout_rng)?;
        let (mean, sigma) = split_policy_head(&out)?;
        let noise: Vec<R> = (0..mean.len()).map(|_| R::standard_normal(noise_rng)).collect();
        Ok(squashed_from_noise(mean, sigma, noise))
    }
}

/// How the actor reads the critic's opinion of an action.
#[derive(Debug, Clone, Copy)]
pub enum CriticObjective<'a, R> {
    /// μ(s,a) − β·σ(s,a) from a single distributional critic.
    Pessimistic { critic: &'a Mlp<R>, beta: R },
    /// min_j μ_j(s,a) over a critic ensemble (scalar or distributional
    /// heads); the gradient flows through the argmin network.
    MinMean { critics: &'a [&'a Mlp<R>] },
}

/// Loss −(1/N)Σ[v(s_i, a_i) − α·log π(a_i|s_i)] over one reparameterized
/// action per state. Gradients flow through the action into the policy
/// parameters only; critic parameters receive none. Returns the loss and the
/// per-state log-probabilities (detached, for the temperature update).
#[allow(clippy::too_many_arguments)]
pub fn actor_loss<R: Real>(
    states: &[&[R]],
    policy: &mut Policy<R>,
    objective: CriticObjective<'_, R>,
    alpha: R,
    mode: Mode,
    noise_rng: &mut dyn RngCore,
    dropout_rng: &mut dyn RngCore,
) -> Result<(R, Vec<R>)> {
    if states.is_empty() {
        return Err(Error::usage("actor loss needs a non-empty batch"));
    }
    let d = policy.action_dim;
    let inv_n = real::<R>(1.0 / states.len() as f64);
    let mut loss = R::zero();
    let mut logps = Vec::with_capacity(states.len());
    let mut actor_tape = Tape::new();
    let mut critic_tapes: Vec<Tape<R>> = match objective {
        CriticObjective::Pessimistic { .. } => vec![Tape::new()],
        CriticObjective::MinMean { critics } => {
            if critics.is_empty() {
                return Err(Error::usage("min-mean objective needs at least one critic"));
            }
            (0..critics.len()).map(|_| Tape::new()).collect()
        }
    };
    let mut head_grad = vec![R::zero(); 2 * d];
    for &state in states {
        let out = policy.net.forward_tape(state, mode, dropout_rng, &mut actor_tape)?;
        let (mean, sigma) = split_policy_head(&out)?;
        let pre = &out[d..];
        let noise: Vec<R> = (0..d).map(|_| R::standard_normal(noise_rng)).collect();
        let sample = squashed_from_noise(mean, sigma, noise);

        // critic value of the sampled action and its gradient w.r.t. the action
        let input = crate::critic::critic_input(state, &sample.action);
        let (value, dv_da) = match objective {
            CriticObjective::Pessimistic { critic, beta } => {
                let cout = critic.forward_tape(&input, mode, dropout_rng, &mut critic_tapes[0])?;
                let (mu, pre_c) = (cout[0], cout[1]);
                let v = mu - beta * critic_sigma(pre_c);
                let grad = [R::one(), -beta * critic_sigma_grad(pre_c)];
                let dinput = critic.backward_input_only(&critic_tapes[0], &grad)?;
                (v, dinput[state.len()..].to_vec())
            }
            CriticObjective::MinMean { critics } => {
                // one forward per critic, gradient through the argmin
                let mut best: Option<(R, usize, usize)> = None;
                for (j, c) in critics.iter().enumerate() {
                    let cout = c.forward_tape(&input, mode, dropout_rng, &mut critic_tapes[j])?;
                    if best.map_or(true, |(b, _, _)| cout[0] < b) {
                        best = Some((cout[0], j, cout.len()));
                    }
                }
                let (v, j, out_len) = best.unwrap();
                let mut grad = vec![R::zero(); out_len];
                grad[0] = R::one();
                let dinput = critics[j].backward_input_only(&critic_tapes[j], &grad)?;
                (v, dinput[state.len()..].to_vec())
            }
        };

        loss += -(value - alpha * sample.log_prob);
        logps.push(sample.log_prob);

        // chain into the policy head: a = tanh(u), u = μ + σξ
        let (dlp_dmu, dlp_dsigma) = squashed_log_prob_grads(&sample);
        for i in 0..d {
            let da_du = R::one() - sample.action[i] * sample.action[i];
            let dloss_da = -dv_da[i];
            let dmu = dloss_da * da_du + alpha * dlp_dmu[i];
            let dsigma = dloss_da * da_du * sample.noise[i] + alpha * dlp_dsigma[i];
            head_grad[i] = dmu * inv_n;
            head_grad[d + i] = dsigma * actor_sigma_grad(pre[i]) * inv_n;
        }
        policy.net.backward(&actor_tape, &head_grad)?;
    }
    Ok((loss * inv_n, logps))
}

/// Trainable temperature: α = exp(log_alpha) stays positive by construction.
#[derive(Debug, Clone)]
pub struct TemperatureState<R> {
    pub log_alpha: ParamTensor<R>,
    pub target_entropy: R,
}

impl<R: Real> TemperatureState<R> {
    pub fn new(init_alpha: f64, target_entropy: R) -> Result<Self> {
        if init_alpha <= 0.0 {
            return Err(Error::domain("initial temperature must be positive"));
        }
        Ok(Self { log_alpha: ParamTensor::scalar(real(init_alpha.ln())), target_entropy })
    }

    pub fn alpha(&self) -> R {
        self.log_alpha.values()[0].exp()
    }
}

/// Default entropy target: the negative action dimension.
pub fn default_target_entropy(action_dim: usize) -> f64 {
    -(action_dim as f64)
}

/// L_α = α·(−H̄ + mean(−log π)) at fixed, detached log-probabilities.
/// Returns (loss, ∂L/∂α, ∂L/∂log α).
pub fn temperature_loss_from_logps<R: Real>(logps: &[R], temp: &TemperatureState<R>) -> (R, R, R) {
    let n = real::<R>(logps.len() as f64);
    let mean_neg_logp = -logps.iter().copied().sum::<R>() / n;
    let dalpha = -temp.target_entropy + mean_neg_logp;
    let alpha = temp.alpha();
    (alpha * dalpha, dalpha, alpha * dalpha)
}

/// Samples one action per state from the current policy and evaluates the
/// temperature loss on the resulting log-probabilities.
pub fn temperature_loss<R: Real>(
    states: &[&[R]],
    policy: &Policy<R>,
    temp: &TemperatureState<R>,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<(R, R)> {
    if states.is_empty() {
        return Err(Error::usage("temperature loss needs a non-empty batch"));
    }
    let mut logps = Vec::with_capacity(states.len());
    for &s in states {
        let (_, lp) = policy.act(s, mode, rng)?;
        logps.push(lp);
    }
    let (loss, _, dlog) = temperature_loss_from_logps(&logps, temp);
    Ok((loss, dlog))
}

#[cfg(test)]
#[path = "actor_tests.rs"]
mod tests;

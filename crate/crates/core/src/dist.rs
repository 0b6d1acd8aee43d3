//! Probability primitives: diagonal Gaussians, the tanh-squashed Gaussian
//! with exact log-density, the Gaussian negative log-likelihood trained by
//! the critic, and sub-Gaussian samplers for the tabular lab.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Numerically stable log(1 + exp(x)).
#[inline]
pub fn softplus<R: Real>(x: R) -> R {
    x.max(R::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<R: Real>(x: R) -> R {
    (R::one() + (-x).exp()).recip()
}

/// log(1 - tanh(u)^2) in the form 2(log 2 - u - softplus(-2u)), stable for
/// large |u|.
#[inline]
pub fn tanh_log_jacobian<R: Real>(u: R) -> R {
    let two = real::<R>(2.0);
    two * (R::LN_2() - u - softplus(-two * u))
}

/// Additive floor on the critic std head.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// Upper clamp on the critic std head.
pub const SIGMA_CEIL: f64 = 1e3;
/// Clamp range of log σ for the actor std head.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Critic positivity map: σ = softplus(pre) + 1e-4, clamped above at 1e3.
#[inline]
pub fn critic_sigma<R: Real>(pre: R) -> R {
    (softplus(pre) + real(SIGMA_FLOOR)).min(real(SIGMA_CEIL))
}

/// dσ/dpre for [`critic_sigma`]; zero in the clamped region.
#[inline]
pub fn critic_sigma_grad<R: Real>(pre: R) -> R {
    if softplus(pre) + real::<R>(SIGMA_FLOOR) >= real(SIGMA_CEIL) {
        R::zero()
    } else {
        sigmoid(pre)
    }
}

/// Actor positivity map: σ = softplus(pre) clamped so that log σ stays in
/// [-20, 2].
#[inline]
pub fn actor_sigma<R: Real>(pre: R) -> R {
    softplus(pre).clamp(real(LOG_STD_MIN.exp()), real(LOG_STD_MAX.exp()))
}

/// dσ/dpre for [`actor_sigma`]; zero in the clamped regions.
#[inline]
pub fn actor_sigma_grad<R: Real>(pre: R) -> R {
    let sp = softplus(pre);
    if sp <= real(LOG_STD_MIN.exp()) || sp >= real(LOG_STD_MAX.exp()) {
        R::zero()
    } else {
        sigmoid(pre)
    }
}

/// Diagonal Gaussian over R^d.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian<R> {
    pub mean: Vec<R>,
    pub std: Vec<R>,
}

impl<R: Real> DiagonalGaussian<R> {
    pub fn new(mean: Vec<R>, std: Vec<R>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::dim("mean and std must have the same length"));
        }
        if std.iter().any(|s| *s <= R::zero()) {
            return Err(Error::domain("std must be strictly positive"));
        }
        Ok(Self { mean, std })
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| m + s * R::standard_normal(rng))
            .collect()
    }

    pub fn log_prob(&self, x: &[R]) -> Result<R> {
        if x.len() != self.mean.len() {
            return Err(Error::dim("log_prob input length mismatch"));
        }
        let mut acc = R::zero();
        for ((&m, &s), &xi) in self.mean.iter().zip(&self.std).zip(x) {
            acc += gaussian_nll(m, s, xi)?;
        }
        Ok(-acc)
    }
}

/// Negative log-likelihood of a scalar Gaussian:
/// ½log(2π) + log σ + (target − μ)² / (2σ²).
pub fn gaussian_nll<R: Real>(mu: R, sigma: R, target: R) -> Result<R> {
    if sigma <= R::zero() {
        return Err(Error::domain(format!("gaussian_nll requires sigma > 0, got {sigma}")));
    }
    let half = real::<R>(0.5);
    let resid = target - mu;
    Ok(half * (real::<R>(2.0) * R::PI()).ln()
        + sigma.ln()
        + resid * resid / (real::<R>(2.0) * sigma * sigma))
}

/// (∂nll/∂μ, ∂nll/∂σ) of [`gaussian_nll`].
pub fn gaussian_nll_grad<R: Real>(mu: R, sigma: R, target: R) -> (R, R) {
    let resid = mu - target;
    let var = sigma * sigma;
    let dmu = resid / var;
    let dsigma = sigma.recip() - resid * resid / (var * sigma);
    (dmu, dsigma)
}

/// One reparameterized draw from a tanh-squashed diagonal Gaussian, with the
/// internals needed to differentiate through it.
#[derive(Debug, Clone)]
pub struct SquashedSample<R> {
    /// Action in (-1, 1)^d.
    pub action: Vec<R>,
    /// Exact joint log-density of `action`.
    pub log_prob: R,
    /// Pre-squash sample u = μ + σξ.
    pub pre_tanh: Vec<R>,
    /// Standard normal noise ξ used for the draw.
    pub noise: Vec<R>,
    pub mean: Vec<R>,
    pub sigma: Vec<R>,
}

/// Splits a policy head output (d means followed by d pre-stds) into
/// (means, sigmas) using the actor positivity map.
pub fn split_policy_head<R: Real>(policy_out: &[R]) -> Result<(Vec<R>, Vec<R>)> {
    if policy_out.len() % 2 != 0 || policy_out.is_empty() {
        return Err(Error::dim(format!(
            "policy head must emit 2*d_a values, got {}",
            policy_out.len()
        )));
    }
    let d = policy_out.len() / 2;
    let mean = policy_out[..d].to_vec();
    let sigma = policy_out[d..].iter().map(|&p| actor_sigma(p)).collect();
    Ok((mean, sigma))
}

/// Draws a = tanh(μ + σξ) with ξ ~ N(0, I) and computes the exact
/// log-density via the change of variables, using the stable Jacobian form.
pub fn squashed_sample<R: Real>(
    policy_out: &[R],
    rng: &mut dyn RngCore,
) -> Result<SquashedSample<R>> {
    let (mean, sigma) = split_policy_head(policy_out)?;
    let noise: Vec<R> = (0..mean.len()).map(|_| R::standard_normal(rng)).collect();
    Ok(squashed_from_noise(mean, sigma, noise))
}

/// Deterministic part of [`squashed_sample`], reusable with frozen noise.
pub fn squashed_from_noise<R: Real>(mean: Vec<R>, sigma: Vec<R>, noise: Vec<R>) -> SquashedSample<R> {
    let half = real::<R>(0.5);
    let half_log_two_pi = half * (real::<R>(2.0) * R::PI()).ln();
    let mut pre_tanh = Vec::with_capacity(mean.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = R::zero();
    for i in 0..mean.len() {
        let u = mean[i] + sigma[i] * noise[i];
        pre_tanh.push(u);
        action.push(u.tanh());
        // log N(u; μ, σ) at u = μ + σξ collapses to -log σ - ½log 2π - ξ²/2
        log_prob += -sigma[i].ln() - half_log_two_pi - half * noise[i] * noise[i];
        log_prob -= tanh_log_jacobian(u);
    }
    SquashedSample { action, log_prob, pre_tanh, noise, mean, sigma }
}

/// Log-density of the squashed Gaussian at an arbitrary action in (-1, 1)^d,
/// going through atanh. Independent route from [`squashed_from_noise`]; the
/// two must agree wherever both are defined.
pub fn squashed_log_density<R: Real>(mean: &[R], sigma: &[R], action: &[R]) -> Result<R> {
    if mean.len() != sigma.len() || mean.len() != action.len() {
        return Err(Error::dim("mean/sigma/action length mismatch"));
    }
    let half = real::<R>(0.5);
    let half_log_two_pi = half * (real::<R>(2.0) * R::PI()).ln();
    let mut log_prob = R::zero();
    for i in 0..mean.len() {
        let a = action[i];
        if a <= -R::one() || a >= R::one() {
            return Err(Error::domain("action must lie strictly inside (-1, 1)"));
        }
        let u = a.atanh();
        let z = (u - mean[i]) / sigma[i];
        log_prob += -sigma[i].ln() - half_log_two_pi - half * z * z;
        log_prob -= tanh_log_jacobian(u);
    }
    Ok(log_prob)
}

/// Gradient of the squashed log-density with respect to (μ_i, σ_i) at a
/// reparameterized sample (fixed noise ξ):
/// ∂logπ/∂μ_i = 2 tanh(u_i), ∂logπ/∂σ_i = -1/σ_i + 2 tanh(u_i) ξ_i.
pub fn squashed_log_prob_grads<R: Real>(s: &SquashedSample<R>) -> (Vec<R>, Vec<R>) {
    let two = real::<R>(2.0);
    let mut dmu = Vec::with_capacity(s.mean.len());
    let mut dsigma = Vec::with_capacity(s.mean.len());
    for i in 0..s.mean.len() {
        let t = s.action[i]; // tanh(u_i)
        dmu.push(two * t);
        dsigma.push(-s.sigma[i].recip() + two * t * s.noise[i]);
    }
    (dmu, dsigma)
}

/// Families of sub-Gaussian distributions available to the tabular lab.
///
/// Each family is parameterized by its mean and the sub-Gaussian scale σ
/// (the variance proxy of the concentration bound is σ²):
///
/// * `Gaussian`: N(μ, σ²) — the bound holds with equality;
/// * `Uniform`: U(μ − √3σ, μ + √3σ) — variance σ², which is also its
///   optimal variance proxy;
/// * `BoundedMixture`: equal two-point mixture at μ ± σ — bounded support,
///   proxy σ² by Hoeffding's lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubGaussianFamily {
    Gaussian,
    Uniform,
    BoundedMixture,
}

impl SubGaussianFamily {
    pub fn all() -> [SubGaussianFamily; 3] {
        [Self::Gaussian, Self::Uniform, Self::BoundedMixture]
    }
}

/// Sampler declaring itself sub-Gaussian with std proxy `sigma` (variance
/// proxy σ²). The declared proxy is a claim; [`subgaussian_mgf_check`]
/// verifies it empirically.
#[derive(Debug, Clone, Copy)]
pub struct SubGaussianSampler<R> {
    pub family: SubGaussianFamily,
    pub mean: R,
    /// Claimed sub-Gaussian std proxy (≥ 0). For the built-in families the
    /// distribution is scaled so this claim actually holds.
    pub sigma: R,
}

impl<R: Real> SubGaussianSampler<R> {
    pub fn new(family: SubGaussianFamily, mean: R, sigma: R) -> Result<Self> {
        if sigma < R::zero() {
            return Err(Error::domain("sub-Gaussian proxy must be non-negative"));
        }
        Ok(Self { family, mean, sigma })
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> R {
        sample_family(self.family, self.mean, self.sigma, rng)
    }
}

/// One draw from the given family with mean `mu` and sub-Gaussian scale
/// `sigma`.
#[inline]
pub fn sample_family<R: Real>(
    family: SubGaussianFamily,
    mu: R,
    sigma: R,
    rng: &mut dyn RngCore,
) -> R {
    match family {
        SubGaussianFamily::Gaussian => mu + sigma * R::standard_normal(rng),
        SubGaussianFamily::Uniform => {
            if sigma == R::zero() {
                mu
            } else {
                let w = real::<R>(3f64.sqrt()) * sigma;
                R::uniform_in(rng, mu - w, mu + w)
            }
        }
        SubGaussianFamily::BoundedMixture => {
            if R::uniform_in(rng, R::zero(), R::one()) < real(0.5) {
                mu - sigma
            } else {
                mu + sigma
            }
        }
    }
}

/// Outcome of an empirical moment-generating-function check.
#[derive(Debug, Clone)]
pub struct MgfCheck<R> {
    pub pass: bool,
    /// Bound plus Monte Carlo slack minus empirical MGF; positive means the
    /// bound holds with margin.
    pub margin: R,
    pub empirical: R,
    pub bound: R,
    pub std_error: R,
}

/// Checks E[exp(λX)] ≤ exp(λμ + ½λ²σ²) by Monte Carlo against the sampler's
/// own declared proxy, allowing 3 standard errors of slack.
pub fn subgaussian_mgf_check<R: Real>(
    sampler: &SubGaussianSampler<R>,
    lambda: R,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<MgfCheck<R>> {
    subgaussian_mgf_check_claim(sampler, sampler.sigma, lambda, n, rng)
}

/// Same check against an arbitrary claimed std proxy, so under-claimed
/// proxies can be shown to fail.
pub fn subgaussian_mgf_check_claim<R: Real>(
    sampler: &SubGaussianSampler<R>,
    claimed_sigma: R,
    lambda: R,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<MgfCheck<R>> {
    if n == 0 {
        return Err(Error::usage("mgf check needs at least one sample"));
    }
    let exponent_bound =
        lambda * sampler.mean + real::<R>(0.5) * lambda * lambda * claimed_sigma * claimed_sigma;
    // guard exp() against overflow for both the bound and worst-case samples
    let worst_sample = sampler.mean.abs() + real::<R>(6.0) * sampler.sigma.max(R::one());
    let worst_exponent = (lambda.abs() * worst_sample).max(exponent_bound.abs());
    if as_f64(worst_exponent) > 600.0 {
        return Err(Error::Range(format!(
            "lambda {lambda} would overflow exp(); shrink |lambda| below {:.3}",
            600.0 / as_f64(worst_sample).max(1e-12)
        )));
    }
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for _ in 0..n {
        let x = sampler.sample(rng);
        let e = as_f64((lambda * x).exp());
        sum += e;
        sumsq += e * e;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0);
    let se = (var / nf).sqrt();
    let bound = as_f64(exponent_bound.exp());
    let pass = mean <= bound + 3.0 * se;
    Ok(MgfCheck {
        pass,
        margin: real(bound + 3.0 * se - mean),
        empirical: real(mean),
        bound: real(bound),
        std_error: real(se),
    })
}

#[cfg(test)]
#[path = "dist_tests.rs"]
mod tests;

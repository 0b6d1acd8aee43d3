//! Exact tabular machinery for studying overestimation of soft Bellman
//! updates under noisy critics.
//!
//! The lab works with finite MDPs where every operator is computable
//! exactly, draws critic noise from declared sub-Gaussian families, and
//! measures by Monte Carlo how much the logsumexp optimality backup of a
//! noisy critic exceeds the backup of its mean. The [`verify`] submodule
//! packages the inequality checks into reproducible suites.
//!
//! Actions are discrete here, so the integrals of the continuous setting
//! become sums; the underlying arguments (Jensen's inequality, Tonelli's
//! theorem, the mean value theorem) hold verbatim for sums.

pub mod verify;

pub use verify::{
    estimate_overestimation, random_instance, run_suite, verify_corollary1, verify_theorem1,
    verify_theorem2, write_report_csv, CorollaryReport, InequalityReport, InstanceParams,
    OverestimationEstimate, ReportRow, SuiteConfig, SuiteOutcome,
};

use ndarray::{Array2, Array3};
use rand::{Rng, RngCore};

use crate::dist::{sample_family, SubGaussianFamily};
use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Finite MDP with explicit transition and reward tensors.
#[derive(Debug, Clone)]
pub struct TabularMdp<R> {
    pub n_states: usize,
    pub n_actions: usize,
    /// transition[s, a, s'] — each (s, a) row is a distribution over s'.
    pub transition: Array3<R>,
    /// reward[s, a].
    pub reward: Array2<R>,
    pub gamma: R,
}

impl<R: Real> TabularMdp<R> {
    pub fn new(transition: Array3<R>, reward: Array2<R>, gamma: R) -> Result<Self> {
        let (s, a, s2) = transition.dim();
        if s == 0 || a == 0 || s != s2 {
            return Err(Error::dim("transition tensor must be [S, A, S] with S, A > 0"));
        }
        if reward.dim() != (s, a) {
            return Err(Error::dim("reward matrix must be [S, A]"));
        }
        if !(R::zero()..R::one()).contains(&gamma) {
            return Err(Error::domain(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        for si in 0..s {
            for ai in 0..a {
                let mut sum = 0.0f64;
                for sj in 0..s {
                    let p = as_f64(transition[(si, ai, sj)]);
                    if p < 0.0 {
                        return Err(Error::domain("transition probabilities must be >= 0"));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::domain(format!(
                        "transition row ({si}, {ai}) sums to {sum}, not 1"
                    )));
                }
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("rewards must be finite"));
        }
        Ok(Self { n_states: s, n_actions: a, transition, reward, gamma })
    }

    /// Uniform policy over actions.
    pub fn uniform_policy(&self) -> Array2<R> {
        Array2::from_elem(
            (self.n_states, self.n_actions),
            real::<R>(1.0 / self.n_actions as f64),
        )
    }
}

/// Independent critic noise per (s, a): mean matrix, sub-Gaussian scale
/// matrix, and the noise family shared by all entries.
#[derive(Debug, Clone)]
pub struct TabularCriticDistribution<R> {
    pub mu: Array2<R>,
    pub sigma: Array2<R>,
    pub family: SubGaussianFamily,
}

impl<R: Real> TabularCriticDistribution<R> {
    pub fn new(mu: Array2<R>, sigma: Array2<R>, family: SubGaussianFamily) -> Result<Self> {
        if mu.dim() != sigma.dim() {
            return Err(Error::dim("mu and sigma must have identical shapes"));
        }
        if sigma.iter().any(|s| *s < R::zero()) {
            return Err(Error::domain("sigma must be non-negative"));
        }
        Ok(Self { mu, sigma, family })
    }

    /// Draws one full critic matrix, independently per entry.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Array2<R> {
        let mut q = self.mu.clone();
        for ((idx, v), &s) in q.indexed_iter_mut().zip(self.sigma.iter()) {
            let _ = idx;
            *v = sample_family(self.family, *v, s, rng);
        }
        q
    }
}

/// Per-state soft value: v(s) = α̃·log Σ_a exp(Q(s, a)/α̃), computed with a
/// max shift so huge values cannot overflow.
pub fn soft_state_values<R: Real>(q: &Array2<R>, alpha_tilde: R) -> Result<Vec<R>> {
    if alpha_tilde <= R::zero() {
        return Err(Error::domain(format!("alpha_tilde must be positive, got {alpha_tilde}")));
    }
    let (s, a) = q.dim();
    let mut values = Vec::with_capacity(s);
    for si in 0..s {
        let mut m = q[(si, 0)];
        for ai in 1..a {
            m = m.max(q[(si, ai)]);
        }
        let mut acc = R::zero();
        for ai in 0..a {
            acc += ((q[(si, ai)] - m) / alpha_tilde).exp();
        }
        values.push(m + alpha_tilde * acc.ln());
    }
    Ok(values)
}

/// Soft optimality backup:
/// (T*Q)(s,a) = R(s,a) + γ·Σ_{s'} P(s,a,s')·α̃·log Σ_{a'} exp(Q(s',a')/α̃).
pub fn soft_optimality_backup<R: Real>(
    mdp: &TabularMdp<R>,
    q: &Array2<R>,
    alpha_tilde: R,
) -> Result<Array2<R>> {
    check_q_shape(mdp, q)?;
    let v = soft_state_values(q, alpha_tilde)?;
    Ok(expected_continuation(mdp, &v))
}

/// Soft policy backup:
/// (T^π Q)(s,a) = R(s,a) + γ·Σ_{s'} P(s,a,s')·Σ_{a'} π(a'|s')·(Q(s',a') − α·log π(a'|s')),
/// with the convention 0·log 0 = 0.
pub fn soft_policy_backup<R: Real>(
    mdp: &TabularMdp<R>,
    q: &Array2<R>,
    pi: &Array2<R>,
    alpha: R,
) -> Result<Array2<R>> {
    check_q_shape(mdp, q)?;
    check_policy(mdp, pi)?;
    let mut v = Vec::with_capacity(mdp.n_states);
    for s in 0..mdp.n_states {
        let mut acc = R::zero();
        for a in 0..mdp.n_actions {
            let p = pi[(s, a)];
            if p > R::zero() {
                acc += p * (q[(s, a)] - alpha * p.ln());
            }
        }
        v.push(acc);
    }
    Ok(expected_continuation(mdp, &v))
}

/// One sample of the β-pessimistic distributional policy backup: for each
/// (s, a), draw s' from the transition row and a' from the policy, then
/// back up R(s,a) + γ·(μ(s',a') − β·σ(s',a') − α·log π(a'|s')).
pub fn pessimistic_backup<R: Real>(
    mdp: &TabularMdp<R>,
    crit: &TabularCriticDistribution<R>,
    pi: &Array2<R>,
    alpha: R,
    beta: R,
    rng: &mut dyn RngCore,
) -> Result<Array2<R>> {
    if beta < R::zero() {
        return Err(Error::domain("beta must be non-negative"));
    }
    check_q_shape(mdp, &crit.mu)?;
    check_policy(mdp, pi)?;
    let mut out = Array2::from_elem((mdp.n_states, mdp.n_actions), R::zero());
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let s2 = sample_categorical(
                (0..mdp.n_states).map(|j| as_f64(mdp.transition[(s, a, j)])),
                rng,
            );
            let a2 = sample_categorical((0..mdp.n_actions).map(|j| as_f64(pi[(s2, j)])), rng);
            let logp = real::<R>(as_f64(pi[(s2, a2)]).ln());
            let cont = crit.mu[(s2, a2)] - beta * crit.sigma[(s2, a2)] - alpha * logp;
            out[(s, a)] = mdp.reward[(s, a)] + mdp.gamma * cont;
        }
    }
    Ok(out)
}

fn check_q_shape<R: Real>(mdp: &TabularMdp<R>, q: &Array2<R>) -> Result<()> {
    if q.dim() != (mdp.n_states, mdp.n_actions) {
        return Err(Error::dim("value matrix must be [S, A]"));
    }
    Ok(())
}

fn check_policy<R: Real>(mdp: &TabularMdp<R>, pi: &Array2<R>) -> Result<()> {
    if pi.dim() != (mdp.n_states, mdp.n_actions) {
        return Err(Error::dim("policy must be [S, A]"));
    }
    for s in 0..mdp.n_states {
        let mut sum = 0.0f64;
        for a in 0..mdp.n_actions {
            let p = as_f64(pi[(s, a)]);
            if p < 0.0 {
                return Err(Error::domain("policy probabilities must be >= 0"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("policy row {s} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// R(s,a) + γ·Σ_{s'} P(s,a,s')·v(s').
fn expected_continuation<R: Real>(mdp: &TabularMdp<R>, v: &[R]) -> Array2<R> {
    let mut out = Array2::from_elem((mdp.n_states, mdp.n_actions), R::zero());
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let mut acc = R::zero();
            for (s2, &vs) in v.iter().enumerate() {
                acc += mdp.transition[(s, a, s2)] * vs;
            }
            out[(s, a)] = mdp.reward[(s, a)] + mdp.gamma * acc;
        }
    }
    out
}

fn sample_categorical(probs: impl Iterator<Item = f64>, rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
#[path = "tests.rs"]
mod tests;

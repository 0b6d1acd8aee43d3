//! Monte Carlo verification of the overestimation inequalities on random
//! tabular instances.
//!
//! Three checks, all on the soft optimality backup of a noisy critic
//! with mean μ and sub-Gaussian scale σ per entry:
//!
//! 1. concentration inequality: E[T*Q] is bounded per (s,a) by the backup
//!    of exp(μ/α̃ + σ²/(2α̃²));
//! 2. overestimation bound: ε(s,a) = E[T*Q] − T*μ never exceeds
//!    (γ/2α̃)·E_{s'}[max_{a'} σ²(s',a')];
//! 3. pessimistic correction: subtracting β·σ inside the backup with
//!    β ≥ max ½σ/α̃ pushes the mean backup at or below T*μ.
//!
//! All estimates carry normal-approximation confidence intervals and are
//! reported with a 3-standard-error threshold.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{TabularCriticDistribution, TabularMdp};
use crate::dist::{sample_family, SubGaussianFamily};
use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Absolute slop added to every 3σ comparison so exact-equality cases
/// (σ ≡ 0) are not failed on float noise.
const ABS_EPS: f64 = 1e-9;

/// Instance dimensions and noise ranges for random tabular problems.
#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub gamma: f64,
    pub reward_scale: f64,
    pub mu_scale: f64,
    pub sigma_max: f64,
    /// Overrides the random σ field with a constant when set.
    pub sigma_const: Option<f64>,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            min_states: 2,
            max_states: 5,
            min_actions: 2,
            max_actions: 4,
            gamma: 0.99,
            reward_scale: 1.0,
            mu_scale: 1.0,
            sigma_max: 2.0,
            sigma_const: None,
        }
    }
}

/// Draws a random MDP and critic-noise field.
pub fn random_instance<R: Real>(
    params: &InstanceParams,
    family: SubGaussianFamily,
    rng: &mut dyn RngCore,
) -> (TabularMdp<R>, TabularCriticDistribution<R>) {
    let s = rng.random_range(params.min_states..=params.max_states);
    let a = rng.random_range(params.min_actions..=params.max_actions);
    let mut transition = Array3::from_elem((s, a, s), R::zero());
    for si in 0..s {
        for ai in 0..a {
            let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (sj, w) in raw.iter().enumerate() {
                transition[(si, ai, sj)] = real(w / sum);
            }
        }
    }
    let reward = Array2::from_shape_fn((s, a), |_| {
        real::<R>(rng.random_range(-params.reward_scale..params.reward_scale))
    });
    let mu = Array2::from_shape_fn((s, a), |_| {
        real::<R>(rng.random_range(-params.mu_scale..params.mu_scale))
    });
    let sigma = Array2::from_shape_fn((s, a), |_| match params.sigma_const {
        Some(c) => real::<R>(c),
        None => real::<R>(rng.random_range(0.0..params.sigma_max)),
    });
    let mdp = TabularMdp::new(transition, reward, real(params.gamma)).expect("valid random MDP");
    let crit = TabularCriticDistribution::new(mu, sigma, family).expect("valid random critic");
    (mdp, crit)
}

/// Internal dense f64 view of an instance; Monte Carlo accumulation always
/// runs in f64 regardless of the model scalar.
struct DenseInstance {
    s: usize,
    a: usize,
    p: Vec<f64>,  // [s*a*s']
    r: Vec<f64>,  // [s*a]
    gamma: f64,
    mu: Vec<f64>, // [s*a]
    sigma: Vec<f64>,
    family: SubGaussianFamily,
}

impl DenseInstance {
    fn from<R: Real>(mdp: &TabularMdp<R>, crit: &TabularCriticDistribution<R>) -> Result<Self> {
        if crit.mu.dim() != (mdp.n_states, mdp.n_actions) {
            return Err(Error::dim("critic field shape does not match the MDP"));
        }
        let (s, a) = (mdp.n_states, mdp.n_actions);
        Ok(Self {
            s,
            a,
            p: mdp.transition.iter().map(|&x| as_f64(x)).collect(),
            r: mdp.reward.iter().map(|&x| as_f64(x)).collect(),
            gamma: as_f64(mdp.gamma),
            mu: crit.mu.iter().map(|&x| as_f64(x)).collect(),
            sigma: crit.sigma.iter().map(|&x| as_f64(x)).collect(),
            family: crit.family,
        })
    }

    /// v(s) = α̃·logsumexp_a(q(s,·)/α̃), max-shifted.
    fn soft_values(&self, q: &[f64], alpha_tilde: f64, v: &mut [f64]) {
        for si in 0..self.s {
            let row = &q[si * self.a..(si + 1) * self.a];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let acc: f64 = row.iter().map(|&x| ((x - m) / alpha_tilde).exp()).sum();
            v[si] = m + alpha_tilde * acc.ln();
        }
    }

    /// t(s,a) = r(s,a) + γ·Σ_{s'} p(s,a,s')·v(s').
    fn backup(&self, v: &[f64], out: &mut [f64]) {
        for sa in 0..self.s * self.a {
            let row = &self.p[sa * self.s..(sa + 1) * self.s];
            let acc: f64 = row.iter().zip(v).map(|(&p, &vs)| p * vs).sum();
            out[sa] = self.r[sa] + self.gamma * acc;
        }
    }

    /// Exact T*μ.
    fn exact_backup_of_mean(&self, alpha_tilde: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.s];
        self.soft_values(&self.mu, alpha_tilde, &mut v);
        let mut out = vec![0.0; self.s * self.a];
        self.backup(&v, &mut out);
        out
    }

    /// Exact concentration-side bound:
    /// r + γ·Σ p·α̃·logsumexp(μ/α̃ + σ²/(2α̃²)).
    fn exact_concentration_bound(&self, alpha_tilde: f64) -> Vec<f64> {
        let z: Vec<f64> = self
            .mu
            .iter()
            .zip(&self.sigma)
            .map(|(&m, &sg)| m + sg * sg / (2.0 * alpha_tilde))
            .collect();
        // logsumexp(μ/α̃ + σ²/(2α̃²)) scaled by α̃ equals the soft value of
        // the shifted matrix μ + σ²/(2α̃)
        let mut v = vec![0.0; self.s];
        self.soft_values(&z, alpha_tilde, &mut v);
        let mut out = vec![0.0; self.s * self.a];
        self.backup(&v, &mut out);
        out
    }

    /// Exact overestimation bound (γ/2α̃)·E_{s'}[max_{a'} σ²(s',a')].
    fn exact_variance_bound(&self, alpha_tilde: f64) -> Vec<f64> {
        let max_var: Vec<f64> = (0..self.s)
            .map(|si| {
                self.sigma[si * self.a..(si + 1) * self.a]
                    .iter()
                    .map(|&x| x * x)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut out = vec![0.0; self.s * self.a];
        for sa in 0..self.s * self.a {
            let row = &self.p[sa * self.s..(sa + 1) * self.s];
            let acc: f64 = row.iter().zip(&max_var).map(|(&p, &mv)| p * mv).sum();
            out[sa] = self.gamma / (2.0 * alpha_tilde) * acc;
        }
        out
    }

    /// Corollary threshold β* = max over entries of σ/(2α̃).
    fn threshold_beta(&self, alpha_tilde: f64) -> f64 {
        self.sigma.iter().map(|&sg| sg / (2.0 * alpha_tilde)).fold(0.0, f64::max)
    }
}

/// Per-entry Monte Carlo statistics of the β-shifted optimality backup
/// T*_β Q (with Q − β·σ inside the logsumexp), accumulated as differences
/// against a fixed reference so the σ ≡ 0 case is exactly zero.
struct BackupStats {
    beta: f64,
    /// mean over samples of T*_β Q − reference, per entry.
    mean_delta: Vec<f64>,
    se: Vec<f64>,
}

/// One pass of `n` critic samples shared across all requested β values.
fn mc_backup_stats(
    inst: &DenseInstance,
    alpha_tilde: f64,
    betas: &[f64],
    reference: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<BackupStats> {
    let sa = inst.s * inst.a;
    let mut sums = vec![vec![0.0f64; sa]; betas.len()];
    let mut sumsqs = vec![vec![0.0f64; sa]; betas.len()];
    let mut q = vec![0.0f64; sa];
    let mut shifted = vec![0.0f64; sa];
    let mut v = vec![0.0f64; inst.s];
    let mut t = vec![0.0f64; sa];
    for _ in 0..n {
        for i in 0..sa {
            q[i] = sample_family(inst.family, inst.mu[i], inst.sigma[i], rng);
        }
        for (b, &beta) in betas.iter().enumerate() {
            if beta == 0.0 {
                inst.soft_values(&q, alpha_tilde, &mut v);
            } else {
                for i in 0..sa {
                    shifted[i] = q[i] - beta * inst.sigma[i];
                }
                inst.soft_values(&shifted, alpha_tilde, &mut v);
            }
            inst.backup(&v, &mut t);
            for i in 0..sa {
                let d = t[i] - reference[i];
                sums[b][i] += d;
                sumsqs[b][i] += d * d;
            }
        }
    }
    betas
        .iter()
        .enumerate()
        .map(|(b, &beta)| {
            let mean_delta: Vec<f64> = sums[b].iter().map(|&s| s / n as f64).collect();
            let se: Vec<f64> = sumsqs[b]
                .iter()
                .zip(&mean_delta)
                .map(|(&sq, &m)| {
                    let var = (sq / n as f64 - m * m).max(0.0);
                    (var / n as f64).sqrt()
                })
                .collect();
            BackupStats { beta, mean_delta, se }
        })
        .collect()
}

/// Monte Carlo overestimation estimate ε̂(s,a) = mean[T*Q] − T*μ with a
/// per-entry standard error.
#[derive(Debug, Clone)]
pub struct OverestimationEstimate {
    pub eps: Array2<f64>,
    pub std_error: Array2<f64>,
    pub n_samples: usize,
}

pub fn estimate_overestimation<R: Real>(
    mdp: &TabularMdp<R>,
    crit: &TabularCriticDistribution<R>,
    alpha_tilde: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<OverestimationEstimate> {
    if alpha_tilde <= 0.0 {
        return Err(Error::domain("alpha_tilde must be positive"));
    }
    let inst = DenseInstance::from(mdp, crit)?;
    let exact = inst.exact_backup_of_mean(alpha_tilde);
    let stats = mc_backup_stats(&inst, alpha_tilde, &[0.0], &exact, n_samples, rng);
    let shape = (inst.s, inst.a);
    let eps = Array2::from_shape_vec(shape, stats[0].mean_delta.clone()).expect("shape");
    let se = Array2::from_shape_vec(shape, stats[0].se.clone()).expect("shape");
    Ok(OverestimationEstimate { eps, std_error: se, n_samples })
}

/// Outcome of one elementwise inequality check: estimate ≤ bound + 3σ.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    /// max over entries of estimate − bound − 3σ (≤ 0 means pass).
    pub max_violation: f64,
    /// min over entries of bound − estimate (how much slack the tightest
    /// entry has before CI slop).
    pub min_slack: f64,
    pub pass: bool,
    pub entries: Vec<ReportRow>,
}

/// One CSV row of a verification report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub instance: usize,
    pub check: &'static str,
    pub alpha_tilde: f64,
    pub family: SubGaussianFamily,
    pub state: usize,
    pub action: usize,
    pub estimate: f64,
    pub bound: f64,
    pub slack: f64,
    pub ci3: f64,
}

fn inequality_report(
    instance: usize,
    check: &'static str,
    alpha_tilde: f64,
    family: SubGaussianFamily,
    s: usize,
    a: usize,
    estimate: &[f64],
    bound: &[f64],
    se: &[f64],
) -> InequalityReport {
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_slack = f64::INFINITY;
    let mut entries = Vec::with_capacity(s * a);
    for i in 0..s * a {
        let ci3 = 3.0 * se[i] + ABS_EPS;
        let violation = estimate[i] - bound[i] - ci3;
        let slack = bound[i] - estimate[i];
        max_violation = max_violation.max(violation);
        min_slack = min_slack.min(slack);
        entries.push(ReportRow {
            instance,
            check,
            alpha_tilde,
            family,
            state: i / a,
            action: i % a,
            estimate: estimate[i],
            bound: bound[i],
            slack,
            ci3,
        });
    }
    InequalityReport { max_violation, min_slack, pass: max_violation <= 0.0, entries }
}

/// Checks per (s,a): E[T*Q] ≤ R + γ·E_{s'}[α̃·logΣ exp(μ/α̃ + σ²/(2α̃²))].
pub fn verify_theorem1<R: Real>(
    mdp: &TabularMdp<R>,
    crit: &TabularCriticDistribution<R>,
    alpha_tilde: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InequalityReport> {
    let inst = DenseInstance::from(mdp, crit)?;
    let bound = inst.exact_concentration_bound(alpha_tilde);
    let exact = inst.exact_backup_of_mean(alpha_tilde);
    let stats = mc_backup_stats(&inst, alpha_tilde, &[0.0], &exact, n_samples, rng);
    let lhs: Vec<f64> =
        stats[0].mean_delta.iter().zip(&exact).map(|(&d, &e)| e + d).collect();
    Ok(inequality_report(
        0,
        "concentration",
        alpha_tilde,
        crit.family,
        inst.s,
        inst.a,
        &lhs,
        &bound,
        &stats[0].se,
    ))
}

/// Checks per (s,a): ε̂ ≤ (γ/2α̃)·E_{s'}[max_{a'} σ²(s',a')].
pub fn verify_theorem2<R: Real>(
    mdp: &TabularMdp<R>,
    crit: &TabularCriticDistribution<R>,
    alpha_tilde: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InequalityReport> {
    let inst = DenseInstance::from(mdp, crit)?;
    let exact = inst.exact_backup_of_mean(alpha_tilde);
    let bound = inst.exact_variance_bound(alpha_tilde);
    let stats = mc_backup_stats(&inst, alpha_tilde, &[0.0], &exact, n_samples, rng);
    let eps: Vec<f64> = stats[0].mean_delta.clone();
    Ok(inequality_report(
        0,
        "variance-bound",
        alpha_tilde,
        crit.family,
        inst.s,
        inst.a,
        &eps,
        &bound,
        &stats[0].se,
    ))
}

/// Outcome of the pessimistic-correction check.
#[derive(Debug, Clone)]
pub struct CorollaryReport {
    /// β* = max σ/(2α̃) for this instance.
    pub threshold_beta: f64,
    /// Whether the mean backup at β* stays at or below T*μ everywhere.
    pub pass_at_threshold: bool,
    pub max_violation_at_threshold: f64,
    /// Smallest grid β whose mean backup is at or below T*μ everywhere.
    pub smallest_sufficient_beta: Option<f64>,
    /// Whether β = 0 showed significantly positive overestimation anywhere.
    pub beta0_overestimates: bool,
    pub entries: Vec<ReportRow>,
}

/// Sweeps β over `beta_grid` ∪ {β*} and compares each mean pessimistic
/// optimality backup against the exact T*μ.
pub fn verify_corollary1<R: Real>(
    mdp: &TabularMdp<R>,
    crit: &TabularCriticDistribution<R>,
    alpha_tilde: f64,
    beta_grid: &[f64],
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CorollaryReport> {
    if beta_grid.iter().any(|&b| b < 0.0) {
        return Err(Error::domain("beta grid entries must be non-negative"));
    }
    let inst = DenseInstance::from(mdp, crit)?;
    let threshold = inst.threshold_beta(alpha_tilde);
    let exact = inst.exact_backup_of_mean(alpha_tilde);

    let mut betas: Vec<f64> = beta_grid.to_vec();
    if !betas.contains(&0.0) {
        betas.push(0.0);
    }
    betas.push(threshold);
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    betas.dedup();

    let stats = mc_backup_stats(&inst, alpha_tilde, &betas, &exact, n_samples, rng);

    let mut pass_at_threshold = true;
    let mut max_violation_at_threshold = f64::NEG_INFINITY;
    let mut smallest_sufficient = None;
    let mut beta0_overestimates = false;
    let mut entries = Vec::new();
    for st in &stats {
        let mut max_violation = f64::NEG_INFINITY;
        for i in 0..inst.s * inst.a {
            let ci3 = 3.0 * st.se[i] + ABS_EPS;
            max_violation = max_violation.max(st.mean_delta[i] - ci3);
            entries.push(ReportRow {
                instance: 0,
                check: "pessimistic-correction",
                alpha_tilde,
                family: crit.family,
                state: i / inst.a,
                action: i % inst.a,
                estimate: st.mean_delta[i],
                bound: 0.0,
                slack: -st.mean_delta[i],
                ci3,
            });
        }
        if st.beta == threshold {
            pass_at_threshold = max_violation <= 0.0;
            max_violation_at_threshold = max_violation;
        }
        if st.beta == 0.0 {
            // significantly positive excess anywhere means the uncorrected
            // backup overestimates
            beta0_overestimates = max_violation > 0.0;
        }
        if beta_grid.contains(&st.beta) && max_violation <= 0.0 && smallest_sufficient.is_none() {
            smallest_sufficient = Some(st.beta);
        }
    }
    Ok(CorollaryReport {
        threshold_beta: threshold,
        pass_at_threshold,
        max_violation_at_threshold,
        smallest_sufficient_beta: smallest_sufficient,
        beta0_overestimates,
        entries,
    })
}

/// Full verification suite over random instances.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub instances: usize,
    pub samples: usize,
    pub seed: u64,
    pub alpha_tildes: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub params: InstanceParams,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            samples: 100_000,
            seed: 0,
            alpha_tildes: vec![0.2, 1.0, 5.0],
            beta_grid: vec![0.0, 0.125, 0.25, 0.375, 0.5],
            params: InstanceParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckSummary {
    pub instances: usize,
    pub violations: usize,
    pub worst_violation: f64,
    pub min_slack: f64,
}

impl CheckSummary {
    fn new() -> Self {
        Self { instances: 0, violations: 0, worst_violation: f64::NEG_INFINITY, min_slack: f64::INFINITY }
    }

    fn absorb(&mut self, pass: bool, max_violation: f64, min_slack: f64) {
        self.instances += 1;
        if !pass {
            self.violations += 1;
        }
        self.worst_violation = self.worst_violation.max(max_violation);
        self.min_slack = self.min_slack.min(min_slack);
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub theorem1: CheckSummary,
    pub theorem2: CheckSummary,
    pub corollary_threshold: CheckSummary,
    /// Instances where β = 0 with σ > 0 showed significant overestimation.
    pub beta0_positive: usize,
    pub rows: Vec<ReportRow>,
    pub config: SuiteConfig,
}

impl SuiteOutcome {
    pub fn all_pass(&self) -> bool {
        self.theorem1.violations == 0
            && self.theorem2.violations == 0
            && self.corollary_threshold.violations == 0
    }
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |f: &mut fmt::Formatter<'_>, name: &str, s: &CheckSummary| {
            writeln!(
                f,
                "{}: {} ({} instances, {} violations, worst violation {:.3e}, min slack {:.3e})",
                name,
                if s.violations == 0 { "PASS" } else { "FAIL" },
                s.instances,
                s.violations,
                s.worst_violation,
                s.min_slack,
            )
        };
        line(f, "overestimation inequality (concentration)", &self.theorem1)?;
        line(f, "overestimation upper bound (variance)", &self.theorem2)?;
        line(f, "pessimistic correction at threshold beta", &self.corollary_threshold)?;
        writeln!(
            f,
            "beta=0 overestimation detected on {}/{} instances",
            self.beta0_positive, self.corollary_threshold.instances
        )
    }
}

/// Runs all three checks over `instances` random (MDP, σ-field) draws,
/// alternating noise families; instances run in parallel with one RNG
/// stream each.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    if config.instances == 0 {
        return Err(Error::usage("suite needs at least one instance"));
    }
    let families = [SubGaussianFamily::Gaussian, SubGaussianFamily::BoundedMixture];
    let per_instance: Vec<(InequalityReport, InequalityReport, CorollaryReport)> = (0..config
        .instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1000 + i as u64);
            let family = families[i % families.len()];
            let alpha_tilde = config.alpha_tildes[i % config.alpha_tildes.len()];
            let (mdp, crit) = random_instance::<f64>(&config.params, family, &mut rng);
            let mut t1 = verify_theorem1(&mdp, &crit, alpha_tilde, config.samples, &mut rng)
                .expect("theorem1 check");
            let mut t2 = verify_theorem2(&mdp, &crit, alpha_tilde, config.samples, &mut rng)
                .expect("theorem2 check");
            let mut c1 = verify_corollary1(
                &mdp,
                &crit,
                alpha_tilde,
                &config.beta_grid,
                config.samples,
                &mut rng,
            )
            .expect("corollary check");
            for row in t1.entries.iter_mut().chain(&mut t2.entries).chain(&mut c1.entries) {
                row.instance = i;
            }
            (t1, t2, c1)
        })
        .collect();

    let mut theorem1 = CheckSummary::new();
    let mut theorem2 = CheckSummary::new();
    let mut corollary = CheckSummary::new();
    let mut beta0_positive = 0;
    let mut rows = Vec::new();
    for (t1, t2, c1) in per_instance {
        theorem1.absorb(t1.pass, t1.max_violation, t1.min_slack);
        theorem2.absorb(t2.pass, t2.max_violation, t2.min_slack);
        corollary.absorb(
            c1.pass_at_threshold,
            c1.max_violation_at_threshold,
            -c1.max_violation_at_threshold,
        );
        if c1.beta0_overestimates {
            beta0_positive += 1;
        }
        rows.extend(t1.entries);
        rows.extend(t2.entries);
        rows.extend(c1.entries);
    }
    Ok(SuiteOutcome {
        theorem1,
        theorem2,
        corollary_threshold: corollary,
        beta0_positive,
        rows,
        config: config.clone(),
    })
}

/// Writes per-entry report rows as CSV.
pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out =
        String::from("instance,check,alpha_tilde,family,state,action,estimate,bound,slack,ci3\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:?},{},{},{},{},{},{}",
            r.instance,
            r.check,
            r.alpha_tilde,
            r.family,
            r.state,
            r.action,
            r.estimate,
            r.bound,
            r.slack,
            r.ci3
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

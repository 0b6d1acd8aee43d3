use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dist::SubGaussianFamily;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two states, two actions, exactly row-stochastic transitions.
fn small_mdp(gamma: f64) -> TabularMdp<f64> {
    let mut p = Array3::zeros((2, 2, 2));
    p[(0, 0, 0)] = 0.5;
    p[(0, 0, 1)] = 0.5;
    p[(0, 1, 0)] = 0.25;
    p[(0, 1, 1)] = 0.75;
    p[(1, 0, 0)] = 1.0;
    p[(1, 1, 1)] = 1.0;
    let mut r = Array2::zeros((2, 2));
    r[(0, 0)] = 1.0;
    r[(0, 1)] = -0.5;
    r[(1, 0)] = 0.25;
    r[(1, 1)] = 2.0;
    TabularMdp::new(p, r, gamma).unwrap()
}

#[test]
fn soft_value_of_two_actions_matches_direct_summation() {
    // direct summation oracle: log(e^1 + e^2)
    let q = Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap();
    let v = soft_state_values(&q, 1.0).unwrap();
    let oracle = (1f64.exp() + 2f64.exp()).ln();
    assert!((v[0] - oracle).abs() < 1e-12);
    assert!((v[0] - 2.3133).abs() < 1e-4);
}

#[test]
fn soft_value_low_temperature_approaches_max() {
    let q = Array2::from_shape_vec((1, 3), vec![0.3f64, 1.7, -2.0]).unwrap();
    let v = soft_state_values(&q, 1e-4).unwrap();
    assert!((v[0] - 1.7).abs() < 1e-3);
}

#[test]
fn soft_value_of_identical_actions_adds_log_n() {
    for n in [2usize, 3, 7] {
        let q = Array2::from_elem((1, n), 0.75);
        let v = soft_state_values(&q, 1.0).unwrap();
        assert!((v[0] - (0.75 + (n as f64).ln())).abs() < 1e-12);
    }
}

#[test]
fn soft_value_rejects_nonpositive_temperature() {
    let q = Array2::from_elem((1, 2), 0.0);
    assert!(soft_state_values(&q, 0.0).is_err());
    assert!(soft_state_values(&q, -1.0).is_err());
}

#[test]
fn logsumexp_is_stable_for_huge_values() {
    let q = Array2::from_shape_vec((1, 3), vec![1e6f64, -1e6, 9.9e5]).unwrap();
    let v = soft_state_values(&q, 1e-3).unwrap();
    assert!(v[0].is_finite());
    assert!((v[0] - 1e6).abs() < 1.0);
}

#[test]
fn policy_backup_with_zero_gamma_returns_rewards() {
    let mdp = small_mdp(0.0);
    let q = Array2::from_elem((2, 2), 123.0);
    let pi = mdp.uniform_policy();
    let t = soft_policy_backup(&mdp, &q, &pi, 0.3).unwrap();
    assert_eq!(t, mdp.reward);
}

#[test]
fn deterministic_policy_backup_matches_nested_loop_oracle() {
    let mdp = small_mdp(0.9);
    let q = Array2::from_shape_vec((2, 2), vec![0.3, -1.2, 0.8, 0.1]).unwrap();
    // deterministic policy: action 1 in state 0, action 0 in state 1
    let mut pi = Array2::zeros((2, 2));
    pi[(0, 1)] = 1.0;
    pi[(1, 0)] = 1.0;
    let t = soft_policy_backup(&mdp, &q, &pi, 0.0).unwrap();
    // oracle: hand-rolled nested loops
    for s in 0..2 {
        for a in 0..2 {
            let mut cont = 0.0;
            for s2 in 0..2 {
                let chosen = if s2 == 0 { 1 } else { 0 };
                cont += mdp.transition[(s, a, s2)] * q[(s2, chosen)];
            }
            let expect = mdp.reward[(s, a)] + 0.9 * cont;
            assert!((t[(s, a)] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_policy_entropy_bonus_is_alpha_log_n() {
    let mdp = small_mdp(0.95);
    let q = Array2::from_shape_vec((2, 2), vec![0.4, 0.4, -0.7, -0.7]).unwrap();
    let pi = mdp.uniform_policy();
    let alpha = 0.37;
    let with_entropy = soft_policy_backup(&mdp, &q, &pi, alpha).unwrap();
    let without = soft_policy_backup(&mdp, &q, &pi, 0.0).unwrap();
    // uniform policy: -log π = log |A| for every action, so each continuation
    // picks up exactly γ·α·log 2
    for (w, o) in with_entropy.iter().zip(without.iter()) {
        assert!((w - o - 0.95 * alpha * 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn policy_backup_rejects_invalid_policy() {
    let mdp = small_mdp(0.9);
    let q = Array2::zeros((2, 2));
    let mut pi = Array2::zeros((2, 2));
    pi[(0, 0)] = 0.7; // row 0 sums to 0.7
    pi[(1, 0)] = 1.0;
    assert!(soft_policy_backup(&mdp, &q, &pi, 0.0).is_err());
}

#[test]
fn mdp_validation_rejects_bad_rows() {
    let mut p = Array3::zeros((1, 1, 1));
    p[(0, 0, 0)] = 0.5;
    assert!(TabularMdp::new(p, Array2::zeros((1, 1)), 0.9).is_err());
    let p = Array3::from_elem((1, 1, 1), 1.0);
    assert!(TabularMdp::new(p.clone(), Array2::zeros((1, 1)), 1.0).is_err());
    assert!(TabularMdp::new(p, Array2::from_elem((1, 1), f64::NAN), 0.9).is_err());
}

#[test]
fn pessimistic_backup_beta_zero_matches_policy_backup_in_expectation() {
    let mdp = small_mdp(0.9);
    let mu = Array2::from_shape_vec((2, 2), vec![0.5, -0.2, 1.0, 0.3]).unwrap();
    let sigma = Array2::from_elem((2, 2), 0.8);
    let crit = TabularCriticDistribution::new(mu.clone(), sigma, SubGaussianFamily::Gaussian).unwrap();
    let pi = mdp.uniform_policy();
    let alpha = 0.1;
    let expected = soft_policy_backup(&mdp, &mu, &pi, alpha).unwrap();
    let n = 40_000;
    let mut r = rng(5);
    let mut sums = Array2::<f64>::zeros((2, 2));
    let mut sumsq = Array2::<f64>::zeros((2, 2));
    for _ in 0..n {
        let b = pessimistic_backup(&mdp, &crit, &pi, alpha, 0.0, &mut r).unwrap();
        for (acc, &x) in sums.iter_mut().zip(b.iter()) {
            *acc += x;
        }
        for (acc, &x) in sumsq.iter_mut().zip(b.iter()) {
            *acc += x * x;
        }
    }
    for i in 0..4 {
        let m = sums.as_slice().unwrap()[i] / n as f64;
        let var = sumsq.as_slice().unwrap()[i] / n as f64 - m * m;
        let se = (var / n as f64).sqrt();
        let e = expected.as_slice().unwrap()[i];
        assert!((m - e).abs() < 3.0 * se + 1e-9, "entry {i}: {m} vs {e}");
    }
}

#[test]
fn pessimistic_backup_with_zero_sigma_ignores_beta() {
    let mdp = small_mdp(0.9);
    let mu = Array2::from_shape_vec((2, 2), vec![0.5, -0.2, 1.0, 0.3]).unwrap();
    let sigma = Array2::zeros((2, 2));
    let crit = TabularCriticDistribution::new(mu, sigma, SubGaussianFamily::Gaussian).unwrap();
    let pi = mdp.uniform_policy();
    let a = pessimistic_backup(&mdp, &crit, &pi, 0.1, 0.0, &mut rng(9)).unwrap();
    let b = pessimistic_backup(&mdp, &crit, &pi, 0.1, 5.0, &mut rng(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pessimistic_backup_strictly_decreases_with_beta() {
    let mdp = small_mdp(0.9);
    let mu = Array2::from_shape_vec((2, 2), vec![0.5, -0.2, 1.0, 0.3]).unwrap();
    let sigma = Array2::from_elem((2, 2), 0.6);
    let crit = TabularCriticDistribution::new(mu, sigma, SubGaussianFamily::Gaussian).unwrap();
    let pi = mdp.uniform_policy();
    let a = pessimistic_backup(&mdp, &crit, &pi, 0.1, 0.1, &mut rng(11)).unwrap();
    let b = pessimistic_backup(&mdp, &crit, &pi, 0.1, 0.6, &mut rng(11)).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!(y < x, "sampled backup must strictly decrease when beta grows");
    }
}

#[test]
fn overestimation_is_exactly_zero_for_deterministic_critic() {
    let mdp = small_mdp(0.99);
    let mu = Array2::from_shape_vec((2, 2), vec![0.5, -0.2, 1.0, 0.3]).unwrap();
    let crit =
        TabularCriticDistribution::new(mu, Array2::zeros((2, 2)), SubGaussianFamily::Gaussian)
            .unwrap();
    let est = estimate_overestimation(&mdp, &crit, 1.0, 2_000, &mut rng(3)).unwrap();
    assert!(est.eps.iter().all(|&e| e == 0.0));
    assert!(est.std_error.iter().all(|&s| s == 0.0));
}

#[test]
fn single_action_mdp_has_no_overestimation() {
    // with one action the logsumexp is linear, so noise cancels in
    // expectation
    let p = Array3::from_elem((2, 1, 2), 0.5);
    let r = Array2::from_elem((2, 1), 0.3);
    let mdp = TabularMdp::new(p, r, 0.99).unwrap();
    let mu = Array2::from_elem((2, 1), 0.7);
    let sigma = Array2::from_elem((2, 1), 1.5);
    let crit = TabularCriticDistribution::new(mu, sigma, SubGaussianFamily::Gaussian).unwrap();
    let est = estimate_overestimation(&mdp, &crit, 1.0, 50_000, &mut rng(7)).unwrap();
    for (e, s) in est.eps.iter().zip(est.std_error.iter()) {
        assert!(e.abs() <= 3.0 * s + 1e-9, "{e} vs {s}");
    }
}

#[test]
fn two_state_overestimation_is_positive_and_bounded() {
    // Gaussian σ = 1, α̃ = 1, γ = 0.99: ε̂ > 0 and ε̂ ≤ γ/(2α̃) = 0.495
    let mdp = small_mdp(0.99);
    let mu = Array2::from_shape_vec((2, 2), vec![0.5, -0.2, 1.0, 0.3]).unwrap();
    let sigma = Array2::from_elem((2, 2), 1.0);
    let crit = TabularCriticDistribution::new(mu, sigma, SubGaussianFamily::Gaussian).unwrap();
    let est = estimate_overestimation(&mdp, &crit, 1.0, 100_000, &mut rng(13)).unwrap();
    for (e, s) in est.eps.iter().zip(est.std_error.iter()) {
        assert!(*e > 0.0, "expected positive overestimation, got {e}");
        assert!(*e <= 0.495 + 3.0 * s, "{e} exceeds the variance bound");
    }
}

#[test]
fn policy_backup_contracts_in_sup_norm() {
    let mdp = small_mdp(0.9);
    let pi = mdp.uniform_policy();
    let mut q1 = Array2::from_shape_vec((2, 2), vec![3.0, -1.0, 0.5, 2.0]).unwrap();
    let mut q2 = Array2::from_shape_vec((2, 2), vec![-2.0, 4.0, 1.5, -0.5]).unwrap();
    let sup = |a: &Array2<f64>, b: &Array2<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
    };
    let mut dist = sup(&q1, &q2);
    for _ in 0..10 {
        q1 = soft_policy_backup(&mdp, &q1, &pi, 0.2).unwrap();
        q2 = soft_policy_backup(&mdp, &q2, &pi, 0.2).unwrap();
        let next = sup(&q1, &q2);
        assert!(next <= 0.9 * dist + 1e-12, "{next} vs {dist}");
        dist = next;
    }
}

#[test]
fn theorem_checks_pass_on_small_random_instances() {
    let params = InstanceParams::default();
    for (i, family) in [SubGaussianFamily::Gaussian, SubGaussianFamily::BoundedMixture]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(100 + i as u64);
        let (mdp, crit) = random_instance::<f64>(&params, family, &mut r);
        for alpha_tilde in [0.2, 1.0, 5.0] {
            let t1 = verify_theorem1(&mdp, &crit, alpha_tilde, 20_000, &mut r).unwrap();
            assert!(t1.pass, "concentration violated: {}", t1.max_violation);
            let t2 = verify_theorem2(&mdp, &crit, alpha_tilde, 20_000, &mut r).unwrap();
            assert!(t2.pass, "variance bound violated: {}", t2.max_violation);
            let c1 =
                verify_corollary1(&mdp, &crit, alpha_tilde, &[0.0, 0.25, 0.5], 20_000, &mut r)
                    .unwrap();
            assert!(c1.pass_at_threshold, "correction failed: {}", c1.max_violation_at_threshold);
        }
    }
}

#[test]
fn variance_bound_is_exact_for_unit_sigma() {
    // σ ≡ 1 makes the bound exactly γ/(2α̃) at every entry
    let mdp = small_mdp(0.99);
    let mu = Array2::zeros((2, 2));
    let sigma = Array2::from_elem((2, 2), 1.0);
    let crit = TabularCriticDistribution::new(mu, sigma, SubGaussianFamily::Gaussian).unwrap();
    for alpha_tilde in [0.2, 1.0, 5.0] {
        let rep = verify_theorem2(&mdp, &crit, alpha_tilde, 100, &mut rng(1)).unwrap();
        for row in &rep.entries {
            assert!((row.bound - 0.99 / (2.0 * alpha_tilde)).abs() < 1e-15);
        }
    }
}

#[test]
fn suite_runs_and_reports() {
    let config = SuiteConfig {
        instances: 6,
        samples: 5_000,
        seed: 42,
        ..SuiteConfig::default()
    };
    let outcome = run_suite(&config).unwrap();
    assert!(outcome.all_pass(), "{outcome}");
    assert_eq!(outcome.theorem1.instances, 6);
    assert!(outcome.beta0_positive >= 5, "{}", outcome.beta0_positive);
    let text = outcome.to_string();
    assert!(text.contains("PASS"));
    // CSV export round-trips through the filesystem
    let dir = std::env::temp_dir().join("stac_theory_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.csv");
    write_report_csv(&path, &outcome.rows).unwrap();
    let body = std::fs::read_to_string(&path).unwrap();
    assert!(body.starts_with("instance,check,"));
    assert_eq!(body.lines().count(), outcome.rows.len() + 1);
    std::fs::remove_file(&path).ok();
}

#[test]
fn suite_with_zero_sigma_reports_zero_overestimation() {
    let config = SuiteConfig {
        instances: 4,
        samples: 2_000,
        seed: 7,
        params: InstanceParams { sigma_const: Some(0.0), ..InstanceParams::default() },
        ..SuiteConfig::default()
    };
    let outcome = run_suite(&config).unwrap();
    assert!(outcome.all_pass());
    assert_eq!(outcome.beta0_positive, 0);
    // every variance-bound row has estimate exactly 0
    for row in outcome.rows.iter().filter(|r| r.check == "variance-bound") {
        assert_eq!(row.estimate, 0.0);
    }
}

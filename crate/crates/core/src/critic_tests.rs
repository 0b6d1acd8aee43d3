use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dist::softplus;
use crate::nn::AdamState;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pre-std head value that maps to σ = 1 through the critic positivity map.
fn pre_for_sigma_one() -> f64 {
    (0.9999f64.exp() - 1.0).ln()
}

/// Zero-weight distributional critic with chosen head biases.
fn constant_critic(state_dim: usize, action_dim: usize, mu: f64, pre: f64) -> Mlp<f64> {
    let spec = nn::critic_spec(state_dim, action_dim, &[4], 0.0, true);
    let mut net = Mlp::zeros(spec).unwrap();
    {
        let mut params = net.params_mut();
        params[3].values_mut().copy_from_slice(&[mu, pre]); // head bias
    }
    net
}

fn zero_policy(state_dim: usize, action_dim: usize) -> Policy<f64> {
    let spec = nn::actor_spec(state_dim, action_dim, &[4], 0.0);
    Policy::from_net(Mlp::zeros(spec).unwrap()).unwrap()
}

fn transition(r: f64, done: bool) -> Transition<f64> {
    Transition {
        state: vec![0.1, 0.2],
        action: vec![0.3],
        reward: r,
        next_state: vec![0.4, 0.5],
        done,
    }
}

#[test]
fn zero_weight_critic_outputs_bias_through_head_maps() {
    let net = constant_critic(2, 1, 0.7, 0.2);
    let v = critic_eval(&net, &[0.5, -0.5], &[0.9], Mode::Eval, &mut rng(0)).unwrap();
    assert_eq!(v.mu, 0.7);
    assert!((v.sigma - (softplus(0.2) + 1e-4)).abs() < 1e-15);
}

#[test]
fn eval_mode_is_deterministic() {
    let spec = nn::critic_spec(2, 1, &[8, 8], 0.5, true);
    let net = Mlp::<f64>::new(spec, &mut rng(3)).unwrap();
    let a = critic_eval(&net, &[0.1, 0.2], &[0.3], Mode::Eval, &mut rng(1)).unwrap();
    let b = critic_eval(&net, &[0.1, 0.2], &[0.3], Mode::Eval, &mut rng(2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_mode_dropout_matches_hand_rolled_masked_forward() {
    // 3-input critic (d_s = 2, d_a = 1), one hidden block of 4, dropout 0.5.
    // The oracle replays the mask stream and computes the forward pass with
    // straight-line arithmetic.
    let p = 0.5;
    let spec = nn::critic_spec(2, 1, &[4], p, true);
    let net = Mlp::<f64>::new(spec, &mut rng(21)).unwrap();
    let params = net.params();
    let (w0, b0, w1, b1, gain, bias) = (
        params[0].values(),
        params[1].values(),
        params[2].values(),
        params[3].values(),
        params[4].values(),
        params[5].values(),
    );
    let x = [0.2, -0.4, 0.6];

    let seed = 77;
    let got = net.infer(&x, Mode::Train, &mut rng(seed)).unwrap();

    // oracle: replay the mask draws (one f32 per hidden unit, in unit order)
    let mut mask_rng = rng(seed);
    let mut h = [0.0f64; 4];
    for o in 0..4 {
        h[o] = b0[o] + (0..3).map(|i| w0[o * 3 + i] * x[i]).sum::<f64>();
    }
    for item in h.iter_mut() {
        use rand::Rng as _;
        let drop: f32 = mask_rng.random();
        *item *= if drop < p as f32 { 0.0 } else { 1.0 / (1.0 - p) };
    }
    let mean = h.iter().sum::<f64>() / 4.0;
    let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let inv = 1.0 / (var + crate::nn::LAYER_NORM_EPS).sqrt();
    let mut z = [0.0f64; 4];
    for o in 0..4 {
        z[o] = (gain[o] * ((h[o] - mean) * inv) + bias[o]).max(0.0);
    }
    for o in 0..2 {
        let expect = b1[o] + (0..4).map(|i| w1[o * 4 + i] * z[i]).sum::<f64>();
        assert!((got[o] - expect).abs() < 1e-12, "{} vs {expect}", got[o]);
    }
}

#[test]
fn td_target_done_masks_continuation() {
    let critic = constant_critic(2, 1, 123.0, 5.0);
    let actor = zero_policy(2, 1);
    let t = transition(1.0, true);
    let targets = td_target(
        &[&t],
        &actor,
        &critic,
        0.2,
        0.5,
        0.99,
        Mode::Eval,
        &mut rng(1),
        &mut rng(2),
    )
    .unwrap();
    assert_eq!(targets, vec![1.0]);
}

#[test]
fn td_target_arithmetic_with_constant_networks() {
    // μ = 2, σ = 1, β = 0.5, α = 0, r = 0, γ = 0.99, not done:
    // target = 0.99·(2 − 0.5) = 1.485
    let critic = constant_critic(2, 1, 2.0, pre_for_sigma_one());
    let actor = zero_policy(2, 1);
    let t = transition(0.0, false);
    let targets = td_target(
        &[&t],
        &actor,
        &critic,
        0.0,
        0.5,
        0.99,
        Mode::Eval,
        &mut rng(1),
        &mut rng(2),
    )
    .unwrap();
    assert!((targets[0] - 1.485).abs() < 1e-12, "{}", targets[0]);
}

#[test]
fn td_target_beta_zero_alpha_zero_is_plain_mean_backup() {
    let critic = constant_critic(2, 1, 2.0, 0.3);
    let actor = zero_policy(2, 1);
    let t = transition(0.25, false);
    let targets = td_target(
        &[&t],
        &actor,
        &critic,
        0.0,
        0.0,
        0.9,
        Mode::Eval,
        &mut rng(1),
        &mut rng(2),
    )
    .unwrap();
    assert!((targets[0] - (0.25 + 0.9 * 2.0)).abs() < 1e-15);
}

#[test]
fn td_target_monotone_nonincreasing_in_beta() {
    let spec = nn::critic_spec(2, 1, &[8], 0.0, true);
    let critic = Mlp::<f64>::new(spec, &mut rng(5)).unwrap();
    let actor = Policy::new(2, 1, &[8], 0.0, &mut rng(6)).unwrap();
    let t = transition(0.1, false);
    let mut prev: Option<f64> = None;
    for beta in [0.0, 0.125, 0.25, 0.5, 1.0, 2.0] {
        let targets = td_target(
            &[&t],
            &actor,
            &critic,
            0.1,
            beta,
            0.99,
            Mode::Eval,
            &mut rng(42),
            &mut rng(43),
        )
        .unwrap();
        if let Some(p) = prev {
            assert!(targets[0] <= p, "target increased with beta");
        }
        prev = Some(targets[0]);
    }
}

#[test]
fn td_target_rejects_negative_beta() {
    let critic = constant_critic(2, 1, 0.0, 0.0);
    let actor = zero_policy(2, 1);
    let t = transition(0.0, false);
    assert!(matches!(
        td_target(&[&t], &actor, &critic, 0.0, -0.1, 0.99, Mode::Eval, &mut rng(1), &mut rng(2)),
        Err(Error::Domain(_))
    ));
}

#[test]
fn stac_minus_plain_target_is_gamma_beta_sigma() {
    // with a fresh ã′ resampled under the same seeds, the pessimistic and
    // plain targets differ by exactly γ·β·σ̄(s′, ã′)
    let spec = nn::critic_spec(2, 1, &[8], 0.0, true);
    let critic = Mlp::<f64>::new(spec, &mut rng(15)).unwrap();
    let actor = Policy::new(2, 1, &[8], 0.0, &mut rng(16)).unwrap();
    let t = transition(0.3, false);
    let (gamma, beta, alpha) = (0.99, 0.4, 0.05);
    let run = |b: f64| {
        td_target(
            &[&t],
            &actor,
            &critic,
            alpha,
            b,
            gamma,
            Mode::Eval,
            &mut rng(7),
            &mut rng(8),
        )
        .unwrap()[0]
    };
    let plain = run(0.0);
    let pessimistic = run(beta);
    // recover σ̄ at the same sampled action
    let sample = actor
        .sample_detailed(&t.next_state, Mode::Train, &mut rng(7), &mut rng(8))
        .unwrap();
    let sigma = critic_eval(&critic, &t.next_state, &sample.action, Mode::Eval, &mut rng(0))
        .unwrap()
        .sigma;
    let diff = plain - pessimistic;
    assert!((diff - gamma * beta * sigma).abs() < 1e-12, "{diff} vs {}", gamma * beta * sigma);
}

#[test]
fn critic_loss_at_perfect_mean_unit_sigma() {
    let mut critic = constant_critic(2, 1, 1.5, pre_for_sigma_one());
    let t = transition(0.0, false);
    let loss = critic_loss(&[&t], &[1.5], &mut critic, Mode::Eval, &mut rng(0)).unwrap();
    let half_log_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((loss - half_log_two_pi).abs() < 1e-9, "{loss}");
}

#[test]
fn doubling_sigma_at_zero_residual_adds_log_two() {
    // σ: 1 → 2 at residual 0 raises the NLL by exactly log 2
    let pre1 = pre_for_sigma_one();
    let pre2 = (1.9999f64.exp() - 1.0).ln(); // σ = 2
    let mut c1 = constant_critic(2, 1, 1.5, pre1);
    let mut c2 = constant_critic(2, 1, 1.5, pre2);
    let t = transition(0.0, false);
    let l1 = critic_loss(&[&t], &[1.5], &mut c1, Mode::Eval, &mut rng(0)).unwrap();
    let l2 = critic_loss(&[&t], &[1.5], &mut c2, Mode::Eval, &mut rng(0)).unwrap();
    assert!((l2 - l1 - 2f64.ln()).abs() < 1e-12, "{}", l2 - l1);
}

#[test]
fn critic_loss_decreases_after_one_adam_step() {
    let spec = nn::critic_spec(2, 1, &[8], 0.0, true);
    let mut critic = Mlp::<f64>::new(spec, &mut rng(31)).unwrap();
    let mut adam = AdamState::for_mlp(&critic, 1e-3);
    let t = transition(0.0, false);
    let targets = [2.5];
    let before = critic_loss(&[&t], &targets, &mut critic, Mode::Eval, &mut rng(0)).unwrap();
    critic.adam_step(&mut adam).unwrap();
    critic.zero_grads();
    let after = critic_loss(&[&t], &targets, &mut critic, Mode::Eval, &mut rng(0)).unwrap();
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn non_finite_target_names_the_transition() {
    let mut critic = constant_critic(2, 1, 0.0, 0.0);
    let t0 = transition(0.0, false);
    let t1 = transition(0.0, false);
    let err = critic_loss(&[&t0, &t1], &[1.0, f64::NAN], &mut critic, Mode::Eval, &mut rng(0))
        .unwrap_err();
    match err {
        Error::TrainingHealth(msg) => assert!(msg.contains("index 1"), "{msg}"),
        other => panic!("expected training-health error, got {other:?}"),
    }
}

#[test]
fn targets_leave_lagged_and_actor_parameters_untouched() {
    let spec = nn::critic_spec(2, 1, &[8], 0.1, true);
    let critic = Mlp::<f64>::new(spec, &mut rng(51)).unwrap();
    let actor = Policy::new(2, 1, &[8], 0.1, &mut rng(52)).unwrap();
    let critic_hash = critic.hash_params();
    let actor_hash = actor.net.hash_params();
    let t = transition(0.1, false);
    let _ = td_target(
        &[&t],
        &actor,
        &critic,
        0.2,
        0.5,
        0.99,
        Mode::Train,
        &mut rng(1),
        &mut rng(2),
    )
    .unwrap();
    assert_eq!(critic.hash_params(), critic_hash);
    assert_eq!(actor.net.hash_params(), actor_hash);
    assert!(critic.params().iter().all(|p| p.grad().iter().all(|&g| g == 0.0)));
    assert!(actor.net.params().iter().all(|p| p.grad().iter().all(|&g| g == 0.0)));
}

#[test]
fn critic_pair_lagged_starts_equal_and_tracks_polyak() {
    let mut pair = CriticPair::<f64>::new(2, 1, &[8], 0.0, true, &mut rng(61)).unwrap();
    assert_eq!(pair.online.hash_params(), pair.lagged.hash_params());
    // perturb online, then polyak with ρ = 0 copies it into the lagged net
    let mut adam = AdamState::for_mlp(&pair.online, 1e-2);
    let t = transition(0.0, false);
    critic_loss(&[&t], &[3.0], &mut pair.online, Mode::Eval, &mut rng(0)).unwrap();
    pair.online.adam_step(&mut adam).unwrap();
    assert_ne!(pair.online.hash_params(), pair.lagged.hash_params());
    pair.polyak(0.0).unwrap();
    assert_eq!(pair.online.hash_params(), pair.lagged.hash_params());
}

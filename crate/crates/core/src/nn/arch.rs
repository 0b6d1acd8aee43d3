//! The two fixed network shapes used by the algorithms.
//!
//! Both are two-hidden-block MLPs (Linear → Dropout → LayerNorm → ReLU)
//! with a linear head:
//!
//! * critic: input (s, a), head of width 2 (mean and pre-std) for the
//!   distributional head, or width 1 for a scalar value head;
//! * actor: input s, head of width 2·d_a (d_a means, d_a pre-stds).

use super::MlpSpec;

/// Critic network spec over concatenated state-action input.
pub fn critic_spec(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    dropout: f64,
    distributional: bool,
) -> MlpSpec {
    MlpSpec::new(
        state_dim + action_dim,
        hidden.to_vec(),
        if distributional { 2 } else { 1 },
    )
    .with_dropout(dropout)
}

/// Actor network spec: state in, mean and pre-std per action dimension out.
pub fn actor_spec(state_dim: usize, action_dim: usize, hidden: &[usize], dropout: f64) -> MlpSpec {
    MlpSpec::new(state_dim, hidden.to_vec(), 2 * action_dim).with_dropout(dropout)
}

//! Stochastic 2-D navigation with a probabilistic danger zone.
//!
//! A point mass starts uniformly in [0.3, 1]² (outside the danger circle)
//! and must reach the goal at the origin. Each step the agent moves by
//! 0.1·action plus a uniform slip of at most 0.02 per dimension. The reward
//! sums three components: the negative Euclidean distance to the goal, a
//! fixed −0.1 step cost, and a −10 penalty drawn with probability
//! 0.1·exp(−4 r²/r₀²) while within the danger circle (r is the distance to
//! the circle center). Episodes terminate within 0.05 of the goal.

use rand::{Rng, RngCore};

use super::{clip_action, Env, EnvSpec, StepResult};
use crate::error::Result;
use crate::scalar::{as_f64, real, Real};

#[derive(Debug, Clone)]
pub struct RiskyPointMassConfig {
    pub danger_center: [f64; 2],
    pub danger_radius: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub step_penalty: f64,
    pub danger_penalty: f64,
    pub penalty_prob_scale: f64,
    pub penalty_prob_decay: f64,
    pub max_move: f64,
    pub slip_max: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub max_episode_steps: u32,
    /// Keep positions inside [0, 1]² after each move.
    pub clamp_positions: bool,
    /// Test hook: disable the stochastic penalty draw entirely.
    pub danger_penalty_enabled: bool,
}

impl Default for RiskyPointMassConfig {
    fn default() -> Self {
        Self {
            danger_center: [0.5, 0.5],
            danger_radius: 0.3,
            goal: [0.0, 0.0],
            goal_radius: 0.05,
            step_penalty: -0.1,
            danger_penalty: -10.0,
            penalty_prob_scale: 0.1,
            penalty_prob_decay: 4.0,
            max_move: 0.1,
            slip_max: 0.02,
            init_low: 0.3,
            init_high: 1.0,
            max_episode_steps: 200,
            clamp_positions: true,
            danger_penalty_enabled: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskyPointMass<R> {
    cfg: RiskyPointMassConfig,
    spec: EnvSpec,
    pos: [R; 2],
    steps: u32,
}

impl<R: Real> RiskyPointMass<R> {
    pub fn new(cfg: RiskyPointMassConfig) -> Self {
        let spec = EnvSpec { state_dim: 2, action_dim: 2, max_episode_steps: cfg.max_episode_steps };
        Self { cfg, spec, pos: [R::zero(); 2], steps: 0 }
    }

    pub fn config(&self) -> &RiskyPointMassConfig {
        &self.cfg
    }

    fn dist_to(&self, point: [f64; 2]) -> f64 {
        let dx = as_f64(self.pos[0]) - point[0];
        let dy = as_f64(self.pos[1]) - point[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Probability of drawing the danger penalty at a given position:
    /// scale·exp(−decay·r²/r₀²) inside the circle, 0 outside.
    pub fn penalty_probability(cfg: &RiskyPointMassConfig, pos: [f64; 2]) -> f64 {
        let dx = pos[0] - cfg.danger_center[0];
        let dy = pos[1] - cfg.danger_center[1];
        let r2 = dx * dx + dy * dy;
        let r0 = cfg.danger_radius;
        if r2.sqrt() < r0 {
            cfg.penalty_prob_scale * (-cfg.penalty_prob_decay * r2 / (r0 * r0)).exp()
        } else {
            0.0
        }
    }
}

impl<R: Real> Env<R> for RiskyPointMass<R> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<R> {
        // rejection-sample until the start lies outside the danger circle
        loop {
            let x = rng.random_range(self.cfg.init_low..self.cfg.init_high);
            let y = rng.random_range(self.cfg.init_low..self.cfg.init_high);
            let dx = x - self.cfg.danger_center[0];
            let dy = y - self.cfg.danger_center[1];
            if (dx * dx + dy * dy).sqrt() >= self.cfg.danger_radius {
                self.pos = [real(x), real(y)];
                break;
            }
        }
        self.steps = 0;
        self.pos.to_vec()
    }

    fn step(&mut self, action: &[R], rng: &mut dyn RngCore) -> Result<StepResult<R>> {
        let a = clip_action(action, 2)?;
        for i in 0..2 {
            let slip = rng.random_range(-self.cfg.slip_max..self.cfg.slip_max);
            let mut p = as_f64(self.pos[i]) + self.cfg.max_move * as_f64(a[i]) + slip;
            if self.cfg.clamp_positions {
                p = p.clamp(0.0, 1.0);
            }
            self.pos[i] = real(p);
        }
        let goal_dist = self.dist_to(self.cfg.goal);
        let mut reward = -goal_dist + self.cfg.step_penalty;
        if self.cfg.danger_penalty_enabled {
            let p = Self::penalty_probability(&self.cfg, [as_f64(self.pos[0]), as_f64(self.pos[1])]);
            if p > 0.0 && rng.random_range(0.0..1.0) < p {
                reward += self.cfg.danger_penalty;
            }
        }
        self.steps += 1;
        let terminated = goal_dist <= self.cfg.goal_radius;
        let truncated = !terminated && self.steps >= self.cfg.max_episode_steps;
        Ok(StepResult { state: self.pos.to_vec(), reward: real(reward), terminated, truncated })
    }

    fn in_danger(&self, state: &[R]) -> Option<bool> {
        let dx = as_f64(state[0]) - self.cfg.danger_center[0];
        let dy = as_f64(state[1]) - self.cfg.danger_center[1];
        Some((dx * dx + dy * dy).sqrt() < self.cfg.danger_radius)
    }
}

//! Deterministic smoke-test variant of the point-mass task: no slip, no
//! danger zone. Reward is the negative goal distance minus a fixed step
//! cost, so a proportional controller solves it in a handful of steps.

use rand::{Rng, RngCore};

use super::{clip_action, Env, EnvSpec, StepResult};
use crate::error::Result;
use crate::scalar::{as_f64, real, Real};

#[derive(Debug, Clone)]
pub struct PointReachConfig {
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub step_penalty: f64,
    pub max_move: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub max_episode_steps: u32,
    pub clamp_positions: bool,
}

impl Default for PointReachConfig {
    fn default() -> Self {
        Self {
            goal: [0.0, 0.0],
            goal_radius: 0.05,
            step_penalty: -0.1,
            max_move: 0.1,
            init_low: 0.3,
            init_high: 1.0,
            max_episode_steps: 100,
            clamp_positions: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointReach<R> {
    cfg: PointReachConfig,
    spec: EnvSpec,
    pos: [R; 2],
    steps: u32,
}

impl<R: Real> PointReach<R> {
    pub fn new(cfg: PointReachConfig) -> Self {
        let spec = EnvSpec { state_dim: 2, action_dim: 2, max_episode_steps: cfg.max_episode_steps };
        Self { cfg, spec, pos: [R::zero(); 2], steps: 0 }
    }

    pub fn config(&self) -> &PointReachConfig {
        &self.cfg
    }
}

impl<R: Real> Env<R> for PointReach<R> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<R> {
        let x = rng.random_range(self.cfg.init_low..self.cfg.init_high);
        let y = rng.random_range(self.cfg.init_low..self.cfg.init_high);
        self.pos = [real(x), real(y)];
        self.steps = 0;
        self.pos.to_vec()
    }

    fn step(&mut self, action: &[R], _rng: &mut dyn RngCore) -> Result<StepResult<R>> {
        let a = clip_action(action, 2)?;
        for i in 0..2 {
            let mut p = as_f64(self.pos[i]) + self.cfg.max_move * as_f64(a[i]);
            if self.cfg.clamp_positions {
                p = p.clamp(0.0, 1.0);
            }
            self.pos[i] = real(p);
        }
        let dx = as_f64(self.pos[0]) - self.cfg.goal[0];
        let dy = as_f64(self.pos[1]) - self.cfg.goal[1];
        let dist = (dx * dx + dy * dy).sqrt();
        self.steps += 1;
        let terminated = dist <= self.cfg.goal_radius;
        let truncated = !terminated && self.steps >= self.cfg.max_episode_steps;
        Ok(StepResult {
            state: self.pos.to_vec(),
            reward: real(-dist + self.cfg.step_penalty),
            terminated,
            truncated,
        })
    }
}

/// Proportional controller toward the origin, saturating at the action
/// bounds. Serves as the hand-coded reference for convergence checks.
pub fn proportional_action<R: Real>(state: &[R], gain: f64) -> Vec<R> {
    state
        .iter()
        .map(|&s| real::<R>((-gain * as_f64(s)).clamp(-1.0, 1.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn proportional_controller_terminates_within_30_steps() {
        let mut env = PointReach::<f64>::new(PointReachConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let mut s = env.reset(&mut rng);
            let mut done = false;
            for _ in 0..30 {
                let a = proportional_action(&s, 20.0);
                let res = env.step(&a, &mut rng).unwrap();
                s = res.state;
                if res.terminated {
                    done = true;
                    break;
                }
            }
            assert!(done, "controller failed to terminate from a reset");
        }
    }

    #[test]
    fn deterministic_dynamics() {
        let mut env = PointReach::<f64>::new(PointReachConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        env.reset(&mut rng);
        env.pos = [0.8, 0.6];
        let a = env.step(&[-0.5, 0.25], &mut rng).unwrap();
        assert_eq!(a.state, vec![0.75, 0.625]);
        let dist = (0.75f64.powi(2) + 0.625f64.powi(2)).sqrt();
        assert!((a.reward - (-dist - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn no_danger_semantics() {
        let env = PointReach::<f64>::new(PointReachConfig::default());
        assert_eq!(env.in_danger(&[0.5, 0.5]), None);
    }
}

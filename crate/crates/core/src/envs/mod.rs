//! Environment contract, the two built-in point-mass tasks, and trajectory
//! analysis helpers (danger occupancy, occupancy grids, CSV export).

mod point_reach;
mod risky_point_mass;

pub use point_reach::{proportional_action, PointReach, PointReachConfig};
pub use risky_point_mass::{RiskyPointMass, RiskyPointMassConfig};

use std::fmt::Write as _;
use std::path::Path;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::scalar::{as_f64, Real};

/// Static description of an environment. Actions are always bounded to
/// [-1, 1]^action_dim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: u32,
}

/// Outcome of one environment step. `terminated` is a true terminal state,
/// `truncated` only the episode time limit.
#[derive(Debug, Clone)]
pub struct StepResult<R> {
    pub state: Vec<R>,
    pub reward: R,
    pub terminated: bool,
    pub truncated: bool,
}

pub trait Env<R: Real> {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns the initial state.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<R>;

    /// Advances one step. Actions are clipped to [-1, 1] per dimension;
    /// non-finite actions are a usage error.
    fn step(&mut self, action: &[R], rng: &mut dyn RngCore) -> Result<StepResult<R>>;

    /// Whether `state` lies inside a hazardous region, for environments that
    /// have one.
    fn in_danger(&self, state: &[R]) -> Option<bool> {
        let _ = state;
        None
    }
}

pub const RISKY_POINT_MASS_ID: &str = "risky-pointmass-v0";
pub const POINT_REACH_ID: &str = "point-reach-v0";

/// Environment registry by string id.
pub fn make_env<R: Real>(id: &str) -> Result<Box<dyn Env<R>>> {
    match id {
        RISKY_POINT_MASS_ID => Ok(Box::new(RiskyPointMass::new(RiskyPointMassConfig::default()))),
        POINT_REACH_ID => Ok(Box::new(PointReach::new(PointReachConfig::default()))),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

pub fn env_ids() -> &'static [&'static str] {
    &[RISKY_POINT_MASS_ID, POINT_REACH_ID]
}

/// Clips an action into [-1, 1]^d, rejecting non-finite entries.
pub(crate) fn clip_action<R: Real>(action: &[R], dim: usize) -> Result<Vec<R>> {
    if action.len() != dim {
        return Err(Error::dim(format!("action length {} (expected {dim})", action.len())));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::usage("non-finite action"));
    }
    Ok(action.iter().map(|&a| a.clamp(-R::one(), R::one())).collect())
}

/// 2-D position histogram over [0, 1]^2 with `n` bins per axis, row-major
/// with the row index binning the y coordinate.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl OccupancyGrid {
    pub fn new(bins: usize) -> Self {
        Self { bins, counts: vec![0; bins * bins] }
    }

    pub fn record(&mut self, x: f64, y: f64) {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        let idx = |v: f64| (((clamp(v) * self.bins as f64) as usize).min(self.bins - 1)) as usize;
        self.counts[idx(y) * self.bins + idx(x)] += 1;
    }

    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.bins + ix]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Plain matrix CSV: `bins` rows of `bins` comma-separated counts; row i
    /// covers y in [i/bins, (i+1)/bins).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for iy in 0..self.bins {
            for ix in 0..self.bins {
                if ix > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.count(ix, iy));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Fraction of 2-D positions lying inside the circle of `radius` around
/// `center`, plus an occupancy histogram for heatmap export.
pub fn danger_occupancy<R: Real>(
    positions: &[Vec<R>],
    center: [f64; 2],
    radius: f64,
    grid_bins: usize,
) -> Result<(f64, OccupancyGrid)> {
    if positions.is_empty() {
        return Err(Error::usage("danger occupancy needs at least one position"));
    }
    let mut grid = OccupancyGrid::new(grid_bins);
    let mut inside = 0usize;
    for p in positions {
        if p.len() < 2 {
            return Err(Error::dim("positions must be 2-D"));
        }
        let (x, y) = (as_f64(p[0]), as_f64(p[1]));
        let dx = x - center[0];
        let dy = y - center[1];
        if (dx * dx + dy * dy).sqrt() < radius {
            inside += 1;
        }
        grid.record(x, y);
    }
    Ok((inside as f64 / positions.len() as f64, grid))
}

/// One row of an exported trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub step: u64,
    pub x: f64,
    pub y: f64,
    pub reward: f64,
    pub terminated: bool,
}

/// Writes trajectory rows as CSV (step, x, y, reward, terminated).
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = String::from("step,x,y,reward,terminated\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.step, r.x, r.y, r.reward, r.terminated);
    }
    std::fs::write(path, out)?;
    Ok(())
}

//! Grid sweeps over (β, actor dropout, critic dropout, seed) with
//! inter-quartile-mean aggregation of the final evaluation window.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::TrainConfig;
use super::metrics::{CsvMetricSink, NullSink};
use super::{train, RunManifest};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mean of the middle half: sort, drop ⌊n/4⌋ from each end, average the rest.
pub fn interquartile_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Final 1% of a run's evaluation returns (at least one entry).
pub fn final_window(returns: &[f64]) -> &[f64] {
    if returns.is_empty() {
        return returns;
    }
    let w = ((returns.len() as f64) * 0.01).ceil().max(1.0) as usize;
    &returns[returns.len() - w.min(returns.len())..]
}

/// Cross product of hyperparameters to sweep.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub betas: Vec<f64>,
    pub actor_dropouts: Vec<f64>,
    pub critic_dropouts: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn cells(&self) -> usize {
        self.betas.len() * self.actor_dropouts.len() * self.critic_dropouts.len()
    }
}

/// Aggregated outcome of one grid cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub beta: f64,
    pub actor_dropout: f64,
    pub critic_dropout: f64,
    pub seeds: Vec<u64>,
    /// IQM over the pooled final windows of all seeds in the cell.
    pub iqm_return: f64,
    /// Mean danger occupancy over the same window, when the environment
    /// reports one.
    pub mean_danger_occupancy: Option<f64>,
}

/// Runs the whole grid. Cells and seeds execute as independent runs in
/// parallel; when `out_dir` is given, each run writes
/// `run-b{β}-ad{..}-cd{..}-s{seed}/{metrics.csv, manifest.toml}` under it.
pub fn sweep<R: Real>(
    base: &TrainConfig,
    grid: &SweepGrid,
    env_id: &str,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepCell>> {
    if grid.betas.is_empty()
        || grid.seeds.is_empty()
        || grid.actor_dropouts.is_empty()
        || grid.critic_dropouts.is_empty()
    {
        return Err(Error::usage("sweep grid must have at least one value per axis"));
    }
    if let Some(beta) = grid.betas.iter().find(|b| **b < 0.0) {
        return Err(Error::config(format!("beta: must be >= 0, got {beta}")));
    }
    let mut runs = Vec::new();
    for &beta in &grid.betas {
        for &ad in &grid.actor_dropouts {
            for &cd in &grid.critic_dropouts {
                for &seed in &grid.seeds {
                    runs.push((beta, ad, cd, seed));
                }
            }
        }
    }
    let outcomes: Vec<Result<(f64, f64, f64, u64, Vec<f64>, Vec<Option<f64>>)>> = runs
        .par_iter()
        .map(|&(beta, ad, cd, seed)| {
            let config = TrainConfig {
                beta,
                actor_dropout: ad,
                critic_dropout: cd,
                seed,
                ..base.clone()
            };
            let result = match out_dir {
                Some(root) => {
                    let dir = root.join(format!("run-b{beta}-ad{ad}-cd{cd}-s{seed}"));
                    std::fs::create_dir_all(&dir)?;
                    RunManifest::new(env_id, &dir, R::NAME, config.clone())
                        .save(&dir.join("manifest.toml"))?;
                    let mut sink = CsvMetricSink::create(&dir.join("metrics.csv"))?;
                    train::<R>(&config, env_id, &mut sink)?
                }
                None => train::<R>(&config, env_id, &mut NullSink)?,
            };
            let returns: Vec<f64> = result.records.iter().map(|r| r.episodic_return).collect();
            let dangers: Vec<Option<f64>> =
                result.records.iter().map(|r| r.danger_occupancy).collect();
            Ok((beta, ad, cd, seed, returns, dangers))
        })
        .collect();

    let mut cells = Vec::new();
    for &beta in &grid.betas {
        for &ad in &grid.actor_dropouts {
            for &cd in &grid.critic_dropouts {
                let mut pooled_returns = Vec::new();
                let mut pooled_danger = Vec::new();
                let mut seeds = Vec::new();
                for outcome in &outcomes {
                    let (b, a, c, seed, returns, dangers) = match outcome {
                        Ok(v) => (v.0, v.1, v.2, v.3, &v.4, &v.5),
                        Err(e) => return Err(Error::usage(format!("sweep run failed: {e}"))),
                    };
                    if b == beta && a == ad && c == cd {
                        seeds.push(seed);
                        let w = final_window(returns);
                        pooled_returns.extend_from_slice(w);
                        let dw = &dangers[dangers.len() - w.len()..];
                        pooled_danger.extend(dw.iter().copied().flatten());
                    }
                }
                let mean_danger = if pooled_danger.is_empty() {
                    None
                } else {
                    Some(pooled_danger.iter().sum::<f64>() / pooled_danger.len() as f64)
                };
                cells.push(SweepCell {
                    beta,
                    actor_dropout: ad,
                    critic_dropout: cd,
                    seeds,
                    iqm_return: interquartile_mean(&pooled_returns),
                    mean_danger_occupancy: mean_danger,
                });
            }
        }
    }
    Ok(cells)
}

/// Long-format CSV: one row per cell.
pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut out = String::from(
        "beta,actor_dropout,critic_dropout,n_seeds,iqm_return,mean_danger_occupancy\n",
    );
    for c in cells {
        let danger = c.mean_danger_occupancy.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.beta,
            c.actor_dropout,
            c.critic_dropout,
            c.seeds.len(),
            c.iqm_return,
            danger
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Pivot table for the terminal: β rows, one column per dropout pair.
pub fn sweep_table_string(cells: &[SweepCell]) -> String {
    let mut betas: Vec<f64> = cells.iter().map(|c| c.beta).collect();
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    betas.dedup();
    let mut drops: Vec<(f64, f64)> =
        cells.iter().map(|c| (c.actor_dropout, c.critic_dropout)).collect();
    drops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    drops.dedup();
    let mut out = String::from("beta");
    for (ad, cd) in &drops {
        let _ = write!(out, "\tad={ad}/cd={cd}");
    }
    out.push('\n');
    for beta in &betas {
        let _ = write!(out, "{beta}");
        for (ad, cd) in &drops {
            let cell = cells.iter().find(|c| {
                c.beta == *beta && c.actor_dropout == *ad && c.critic_dropout == *cd
            });
            match cell {
                Some(c) => {
                    let _ = write!(out, "\t{:.2}", c.iqm_return);
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iqm_of_four_values_is_the_middle_half_mean() {
        assert_eq!(interquartile_mean(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(interquartile_mean(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn iqm_of_short_inputs_is_the_plain_mean() {
        assert_eq!(interquartile_mean(&[7.0]), 7.0);
        assert_eq!(interquartile_mean(&[1.0, 3.0]), 2.0);
        assert_eq!(interquartile_mean(&[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn iqm_ignores_extreme_quartiles() {
        // outliers in the outer quartiles do not move the result
        assert_eq!(interquartile_mean(&[-1000.0, 2.0, 3.0, 1000.0]), 2.5);
    }

    #[test]
    fn final_window_is_one_percent_rounded_up() {
        let returns: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(final_window(&returns), &[49.0]);
        let returns: Vec<f64> = (0..250).map(|i| i as f64).collect();
        assert_eq!(final_window(&returns).len(), 3);
        let one = [5.0];
        assert_eq!(final_window(&one), &[5.0]);
    }
}

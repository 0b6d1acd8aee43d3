//! Evaluation records and metric sinks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// One evaluation point: deterministic episodes run on a separate
/// environment instance with dropout and policy noise disabled.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRecord {
    pub env_step: u64,
    /// Mean undiscounted episode return.
    pub episodic_return: f64,
    /// Mean over visited (s, a) of critic prediction minus the realized
    /// discounted return from that point.
    pub value_estimation_error: f64,
    /// Fraction of visited states inside the danger region, when the
    /// environment defines one.
    pub danger_occupancy: Option<f64>,
    /// Seconds since training started (not part of the metric CSV).
    pub wall_time_s: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Mean critic σ over visited (s, a); zero for scalar critics.
    pub sigma_mean: f64,
}

pub trait EvalSink {
    fn on_record(&mut self, rec: &EvalRecord) -> Result<()>;
}

/// Discards records (the trainer also returns them in its result).
pub struct NullSink;

impl EvalSink for NullSink {
    fn on_record(&mut self, _rec: &EvalRecord) -> Result<()> {
        Ok(())
    }
}

pub const METRICS_HEADER: &str = "step,return,value_error,alpha,critic_loss,actor_loss,sigma_mean";

/// Append-only CSV metric sink with the fixed column set. Timing data is
/// intentionally excluded so reruns of the same manifest are byte-identical.
pub struct CsvMetricSink {
    w: BufWriter<File>,
}

impl CsvMetricSink {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{METRICS_HEADER}")?;
        Ok(Self { w })
    }
}

impl EvalSink for CsvMetricSink {
    fn on_record(&mut self, r: &EvalRecord) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{},{},{},{},{}",
            r.env_step,
            r.episodic_return,
            r.value_estimation_error,
            r.alpha,
            r.critic_loss,
            r.actor_loss,
            r.sigma_mean
        )?;
        self.w.flush()?;
        Ok(())
    }
}

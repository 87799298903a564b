use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::Scheme;
use crate::error::Result;

pub const METRICS_HEADER: &str =
    "scheme,z_dim,lambda,step,task_loss,recon_loss,weighted_loss,accuracy,compression_ratio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub z_dim: usize,
    pub lambda: f64,
    pub step: usize,
    pub task_loss: f64,
    pub recon_loss: f64,
    pub weighted_loss: f64,
    /// Classification accuracy against the dataset labels.
    pub accuracy: Option<f64>,
    pub compression_ratio: f64,
}

/// Shortest round-trip decimal, switching to exponent form when the plain
/// form would be long (`1e300`, `9.2e-31`).
pub fn fmt_f64(v: f64) -> String {
    let plain = v.to_string();
    if plain.len() > 20 {
        format!("{v:e}")
    } else {
        plain
    }
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.z_dim,
            fmt_f64(self.lambda),
            self.step,
            fmt_f64(self.task_loss),
            fmt_f64(self.recon_loss),
            fmt_f64(self.weighted_loss),
            self.accuracy.map(fmt_f64).unwrap_or_default(),
            fmt_f64(self.compression_ratio)
        )
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn metrics_csv_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

// Absorbs rounding in `baseline - points`.
const ACCURACY_SLACK: f64 = 1e-12;

/// Smallest `z_dim` among `rows` (filtered to one scheme and λ) whose
/// accuracy is within `points` of `baseline_accuracy`. Only the grid is
/// searched; nothing is interpolated.
pub fn smallest_z_within(
    rows: &[MetricsRow],
    scheme: Scheme,
    lambda: f64,
    baseline_accuracy: f64,
    points: f64,
) -> Option<usize> {
    rows.iter()
        .filter(|r| r.scheme == scheme && r.lambda == lambda)
        .filter(|r| r.accuracy.is_some_and(|a| a + ACCURACY_SLACK >= baseline_accuracy - points))
        .map(|r| r.z_dim)
        .min()
}

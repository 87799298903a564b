//! The linear experiment: closed-form and descended factorisations of a
//! rank-controlled task matrix across bottleneck widths and weights.

use codesign_core::codesign::{MetricsRow, Scheme};
use codesign_core::data::gen_linear_task;
use codesign_core::linear::{
    descend_linear, eval_linear_loss, solve_closed_form, DescentConfig, LinearCodesign, LinearObjective,
};
use codesign_core::random::{derive_seed, gaussian_matrix, seeded};
use codesign_core::DenseMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub z_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fresh Gaussian inputs every row is evaluated on.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            n: 6,
            m: 3,
            r: 3,
            z_grid: (1..=6).collect(),
            lambda_grid: vec![0.0],
            steps: 5000,
            learning_rate: 0.01,
            batch_size: 256,
            eval_samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearOutcome {
    pub task: DenseMatrix,
    pub rows: Vec<MetricsRow>,
    /// One line per cell that could not be computed.
    pub failures: Vec<String>,
}

fn row(scheme: Scheme, model: &LinearCodesign, lambda: f64, step: usize, xs: &DenseMatrix) -> Result<MetricsRow, CliError> {
    let loss = eval_linear_loss(model, xs)?;
    Ok(MetricsRow {
        scheme,
        z_dim: model.z_dim(),
        lambda,
        step,
        task_loss: loss.task_loss,
        recon_loss: loss.recon_loss,
        weighted_loss: loss.task_loss + lambda * loss.recon_loss,
        accuracy: None,
        compression_ratio: model.compression_ratio(),
    })
}

/// Rows: the uncompressed reference, then per Z the closed form, the
/// weighted descent for every λ, and the reconstruction-only descent.
pub fn run_linear(p: &LinearParams) -> Result<LinearOutcome, CliError> {
    if p.z_grid.is_empty() || p.lambda_grid.is_empty() {
        return Err(CliError::Usage("z and lambda grids must be nonempty".into()));
    }
    if p.z_grid.contains(&0) {
        return Err(CliError::Usage("bottleneck widths must be >= 1".into()));
    }
    let k = gen_linear_task(p.n, p.m, p.r, p.seed)?;
    let xs = gaussian_matrix(p.eval_samples, p.n, &mut seeded(derive_seed(p.seed, 7)));
    let descent = |objective| DescentConfig {
        steps: p.steps,
        learning_rate: p.learning_rate,
        batch_size: p.batch_size,
        seed: p.seed,
        objective,
        ..Default::default()
    };

    let identity = LinearCodesign::new(DenseMatrix::identity(p.n), DenseMatrix::identity(p.n), k.clone(), 0.0)?;
    let mut rows = vec![MetricsRow {
        scheme: Scheme::Uncompressed,
        ..row(Scheme::Uncompressed, &identity, 0.0, 0, &xs)?
    }];
    let mut failures = Vec::new();
    for &z in &p.z_grid {
        rows.push(row(Scheme::ClosedForm, &solve_closed_form(&k, z)?, 0.0, 0, &xs)?);
        for &lambda in &p.lambda_grid {
            match descend_linear(&k, z, lambda, &descent(LinearObjective::Weighted)) {
                Ok((model, _)) => rows.push(row(Scheme::TaskNet, &model, lambda, p.steps, &xs)?),
                Err(e) => failures.push(format!("tasknet z={z} lambda={lambda}: {e}")),
            }
        }
        match descend_linear(&k, z, 0.0, &descent(LinearObjective::ReconstructionOnly)) {
            Ok((model, _)) => rows.push(row(Scheme::TaskAgnostic, &model, 0.0, p.steps, &xs)?),
            Err(e) => failures.push(format!("task_agnostic z={z}: {e}")),
        }
    }
    Ok(LinearOutcome { task: k, rows, failures })
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_usize_grid(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse grid `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

pub fn parse_f64_grid(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| CliError::Usage(format!("cannot parse lambda `{t}`")))
        })
        .collect()
}

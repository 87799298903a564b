use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{Scheme, TrainConfig};
use super::metrics::MetricsRow;
use super::model::CodesignModel;
use super::train::{eval_uncompressed, train_codesign, train_split_codesign};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub scheme: Scheme,
    pub z_dim: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: SweepCell,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub z_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    /// Task block to split after; `None` compresses the raw input.
    pub split_index: Option<usize>,
    /// Worker threads; each cell is trained on one thread.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::TaskNet, Scheme::TaskAgnostic],
            z_grid: vec![1, 2, 4, 8, 16],
            lambda_grid: vec![0.0],
            split_index: None,
            workers: 1,
        }
    }
}

/// One trained cell: the model and its evaluation trace.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: SweepCell,
    pub model: CodesignModel,
    pub trace: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub baseline: MetricsRow,
    pub cells: Vec<CellOutcome>,
    pub failures: Vec<CellFailure>,
}

impl SweepTable {
    /// Baseline row followed by every trace row, cells in (scheme, Z, λ) order.
    pub fn rows(&self) -> Vec<MetricsRow> {
        let mut out = vec![self.baseline.clone()];
        out.extend(self.cells.iter().flat_map(|c| c.trace.iter().cloned()));
        out
    }

    /// Last trace row of each cell.
    pub fn final_rows(&self) -> Vec<MetricsRow> {
        self.cells.iter().filter_map(|c| c.trace.last().cloned()).collect()
    }

    pub fn final_row(&self, scheme: Scheme, z_dim: usize, lambda: f64) -> Option<&MetricsRow> {
        self.cells
            .iter()
            .find(|c| c.cell.scheme == scheme && c.cell.z_dim == z_dim && c.cell.lambda == lambda)
            .and_then(|c| c.trace.last())
    }
}

/// Expands the grids into cells. Schemes without a reconstruction weight
/// get a single λ = 0 cell per Z.
pub fn sweep_cells(schemes: &[Scheme], z_grid: &[usize], lambda_grid: &[f64]) -> Vec<SweepCell> {
    let mut schemes = schemes.to_vec();
    schemes.sort();
    schemes.dedup();
    let mut zs = z_grid.to_vec();
    zs.sort_unstable();
    zs.dedup();
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();

    let mut cells = Vec::new();
    for &scheme in &schemes {
        for &z_dim in &zs {
            match scheme {
                Scheme::FullyTaskAware | Scheme::TaskAgnostic => cells.push(SweepCell {
                    scheme,
                    z_dim,
                    lambda: 0.0,
                }),
                _ => cells.extend(lambdas.iter().map(|&lambda| SweepCell { scheme, z_dim, lambda })),
            }
        }
    }
    cells
}

/// Trains every (scheme, Z, λ) cell from the same seed. A failing cell is
/// recorded and the rest of the sweep continues.
pub fn sweep_bottleneck(
    task_net: &Mlp,
    data: &LabeledDataset,
    sweep: &SweepConfig,
    base: &TrainConfig,
) -> Result<SweepTable> {
    if sweep.schemes.is_empty() || sweep.z_grid.is_empty() || sweep.lambda_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    if let Some(s) = sweep.schemes.iter().find(|s| !s.is_trainable()) {
        return Err(Error::Config(format!("scheme `{s}` cannot be swept")));
    }
    let baseline = eval_uncompressed(task_net, data, base.target_source)?;
    let cells = sweep_cells(&sweep.schemes, &sweep.z_grid, &sweep.lambda_grid);

    let run_cell = |cell: SweepCell| -> Result<(CodesignModel, Vec<MetricsRow>)> {
        let cfg = TrainConfig {
            scheme: cell.scheme,
            z_dim: cell.z_dim,
            lambda: cell.lambda,
            ..base.clone()
        };
        match sweep.split_index {
            Some(b) => train_split_codesign(task_net, b, data, &cfg),
            None => train_codesign(task_net, data, &cfg),
        }
    };

    let results: Vec<Mutex<Option<Result<(CodesignModel, Vec<MetricsRow>)>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = sweep.workers.clamp(1, cells.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(cells[i]);
                *results[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (cell, slot) in cells.into_iter().zip(results) {
        match slot.into_inner().expect("result slot poisoned") {
            Some(Ok((model, trace))) => outcomes.push(CellOutcome { cell, model, trace }),
            Some(Err(e)) => failures.push(CellFailure {
                cell,
                error: e.to_string(),
            }),
            None => unreachable!("every cell is visited"),
        }
    }
    Ok(SweepTable {
        baseline,
        cells: outcomes,
        failures,
    })
}

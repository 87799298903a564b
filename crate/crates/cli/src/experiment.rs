//! `train` and `sweep`: data generation, task-model pretraining, co-design
//! training and the files each run leaves behind.

use std::path::Path;

use codesign_core::codesign::{
    fmt_f64, metrics_csv_string, smallest_z_within, sweep_bottleneck, train_codesign, train_split_codesign, CellFailure,
    CodesignModel, MetricsRow, ParameterSplit, Scheme, SweepTable,
};
use codesign_core::data::LabeledDataset;
use codesign_core::nn::Mlp;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{json_bytes, unix_now, write_all};

/// Accuracy gap (as a fraction) for "reaches the uncompressed baseline".
pub const BASELINE_TOLERANCE: f64 = 0.02;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TASK_NET_FILE: &str = "task.tnet";
pub const MODEL_DIR: &str = "model";
pub const CELLS_DIR: &str = "cells";

pub struct Prepared {
    pub data: LabeledDataset,
    pub task_net: Mlp,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let data = cfg.task.generate(cfg.seed)?;
    let task_net = cfg.task.task_net(&data, &cfg.task_net, cfg.seed)?;
    Ok(Prepared { data, task_net })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallestZ {
    pub scheme: Scheme,
    pub lambda: f64,
    /// `None` when no grid point came within tolerance.
    pub z_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    /// Seconds since the Unix epoch. The only time-dependent field.
    pub generated_at: u64,
    pub seed: u64,
    pub input_dim: usize,
    pub baseline: MetricsRow,
    pub tolerance: f64,
    pub smallest_z: Vec<SmallestZ>,
    /// Task-agnostic smallest Z over task-aware smallest Z (both at λ = 0
    /// for the task-aware side when available, else its smallest λ).
    pub compression_advantage: Option<f64>,
    pub parameter_split: Option<ParameterSplit>,
    pub cells_completed: usize,
    pub failures: Vec<CellFailure>,
}

fn smallest_z_table(final_rows: &[MetricsRow], baseline: &MetricsRow) -> Vec<SmallestZ> {
    let mut keys: Vec<(Scheme, f64)> = final_rows.iter().map(|r| (r.scheme, r.lambda)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(scheme, lambda)| SmallestZ {
            scheme,
            lambda,
            z_dim: baseline
                .accuracy
                .and_then(|acc| smallest_z_within(final_rows, scheme, lambda, acc, BASELINE_TOLERANCE)),
        })
        .collect()
}

fn compression_advantage(table: &[SmallestZ]) -> Option<f64> {
    let agnostic = table
        .iter()
        .find(|s| s.scheme == Scheme::TaskAgnostic)
        .and_then(|s| s.z_dim)?;
    let aware = table
        .iter()
        .filter(|s| s.scheme == Scheme::TaskNet)
        .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
        .and_then(|s| s.z_dim)?;
    Some(agnostic as f64 / aware as f64)
}

pub fn build_summary(
    command: &str,
    cfg: &ExperimentConfig,
    input_dim: usize,
    baseline: &MetricsRow,
    final_rows: &[MetricsRow],
    parameter_split: Option<ParameterSplit>,
    failures: Vec<CellFailure>,
) -> Summary {
    let smallest_z = smallest_z_table(final_rows, baseline);
    Summary {
        command: command.to_string(),
        generated_at: unix_now(),
        seed: cfg.seed,
        input_dim,
        baseline: baseline.clone(),
        tolerance: BASELINE_TOLERANCE,
        compression_advantage: compression_advantage(&smallest_z),
        smallest_z,
        parameter_split,
        cells_completed: final_rows.len(),
        failures,
    }
}

pub struct TrainRun {
    pub baseline: MetricsRow,
    pub model: CodesignModel,
    pub trace: Vec<MetricsRow>,
    pub task_net: Mlp,
    pub input_dim: usize,
}

impl TrainRun {
    pub fn rows(&self) -> Vec<MetricsRow> {
        std::iter::once(self.baseline.clone()).chain(self.trace.iter().cloned()).collect()
    }
}

/// Trains one model. `sweep.split_index`, when set, also places the split
/// for a single run.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainRun, CliError> {
    cfg.train.validate()?;
    let p = prepare(cfg)?;
    let baseline = codesign_core::codesign::eval_uncompressed(&p.task_net, &p.data, cfg.train.target_source)?;
    let (model, trace) = match cfg.sweep.split_index {
        Some(b) => train_split_codesign(&p.task_net, b, &p.data, &cfg.train)?,
        None => train_codesign(&p.task_net, &p.data, &cfg.train)?,
    };
    Ok(TrainRun {
        baseline,
        model,
        trace,
        input_dim: p.data.input_dim(),
        task_net: p.task_net,
    })
}

pub fn write_train(cfg: &ExperimentConfig, run: &TrainRun) -> Result<Summary, CliError> {
    let last = run.trace.last().cloned().into_iter().collect::<Vec<_>>();
    let summary = build_summary(
        "train",
        cfg,
        run.input_dim,
        &run.baseline,
        &last,
        Some(run.model.parameter_split()?),
        Vec::new(),
    );
    write_all(
        &cfg.out,
        &[
            (METRICS_FILE, metrics_csv_string(&run.rows()).into_bytes()),
            (CONFIG_FILE, cfg.to_toml().into_bytes()),
            (SUMMARY_FILE, json_bytes(&summary)),
            (TASK_NET_FILE, run.task_net.to_bytes()),
        ],
    )?;
    run.model.save(cfg.out.join(MODEL_DIR))?;
    Ok(summary)
}

pub struct SweepRun {
    pub table: SweepTable,
    pub task_net: Mlp,
    pub input_dim: usize,
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepRun, CliError> {
    cfg.train.validate()?;
    let p = prepare(cfg)?;
    let table = sweep_bottleneck(&p.task_net, &p.data, &cfg.sweep, &cfg.train)?;
    Ok(SweepRun {
        table,
        input_dim: p.data.input_dim(),
        task_net: p.task_net,
    })
}

pub fn cell_dir_name(scheme: Scheme, z_dim: usize, lambda: f64) -> String {
    format!("{scheme}_z{z_dim}_lambda{}", fmt_f64(lambda))
}

pub fn write_sweep(cfg: &ExperimentConfig, run: &SweepRun) -> Result<Summary, CliError> {
    let table = &run.table;
    let split = match table.cells.first() {
        Some(c) => Some(c.model.parameter_split()?),
        None => None,
    };
    let summary = build_summary(
        "sweep",
        cfg,
        run.input_dim,
        &table.baseline,
        &table.final_rows(),
        split,
        table.failures.clone(),
    );
    write_all(
        &cfg.out,
        &[
            (METRICS_FILE, metrics_csv_string(&table.rows()).into_bytes()),
            (CONFIG_FILE, cfg.to_toml().into_bytes()),
            (SUMMARY_FILE, json_bytes(&summary)),
            (TASK_NET_FILE, run.task_net.to_bytes()),
        ],
    )?;
    for c in &table.cells {
        c.model
            .save(cfg.out.join(CELLS_DIR).join(cell_dir_name(c.cell.scheme, c.cell.z_dim, c.cell.lambda)))?;
    }
    Ok(summary)
}

/// Features for `send --data`: every column whose name starts with `x`.
pub fn read_feature_csv(path: &Path) -> Result<codesign_core::DenseMatrix, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::EmptyInput(path.display().to_string()))?;
    let cols: Vec<usize> = header
        .split(',')
        .enumerate()
        .filter(|(_, name)| name.trim().starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(CliError::MissingColumn("x0".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let row = cols
            .iter()
            .map(|&c| {
                fields
                    .get(c)
                    .and_then(|f| f.trim().parse::<f64>().ok())
                    .ok_or_else(|| CliError::Experiment(format!("{}: bad value in row {}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::EmptyInput(path.display().to_string()));
    }
    Ok(codesign_core::DenseMatrix::from_rows(&rows)?)
}

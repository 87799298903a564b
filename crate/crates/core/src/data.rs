//! Seeded synthetic datasets.
//!
//! * rank-controlled linear task matrices,
//! * Gaussian-cluster classification,
//! * three-class sensor windows (tamper / temperature spike / normal drift)
//!   over four channels.
//!
//! Every generator is a pure function of its parameters and seed.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::Targets;
use crate::random::{derive_seed, gaussian_matrix, orthonormal_columns, permutation, seeded};

/// Fraction of samples assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression { outputs: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub inputs: DenseMatrix,
    pub targets: Targets,
    pub task_kind: TaskKind,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl LabeledDataset {
    /// Assembles a dataset with a seeded train/test split.
    pub fn with_split(inputs: DenseMatrix, targets: Targets, task_kind: TaskKind, seed: u64) -> Result<Self> {
        let n = inputs.rows();
        if targets.len() != n {
            return Err(shape_err("dataset targets", n, targets.len()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("dataset needs at least 2 samples".into()));
        }
        match (&task_kind, &targets) {
            (TaskKind::Classification { classes }, Targets::Classes(c)) => {
                if let Some(bad) = c.iter().find(|&&k| k >= *classes) {
                    return Err(Error::TargetMismatch(format!("label {bad} >= {classes} classes")));
                }
            }
            (TaskKind::Regression { outputs }, Targets::Values(v)) => {
                if v.cols() != *outputs {
                    return Err(shape_err("regression targets", outputs, v.cols()));
                }
            }
            _ => return Err(Error::TargetMismatch("target type does not match task kind".into())),
        }
        let order = permutation(n, &mut seeded(derive_seed(seed, 0x5917)));
        let n_train = ((n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n - 1);
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            inputs,
            targets,
            task_kind,
            train,
            test,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Width of the task output (number of classes or regression outputs).
    pub fn output_dim(&self) -> usize {
        match self.task_kind {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression { outputs } => outputs,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.task_kind, TaskKind::Classification { .. })
    }

    pub fn train_inputs(&self) -> DenseMatrix {
        self.inputs.select_rows(&self.train)
    }

    pub fn test_inputs(&self) -> DenseMatrix {
        self.inputs.select_rows(&self.test)
    }

    pub fn train_targets(&self) -> Targets {
        self.targets.select(&self.train)
    }

    pub fn test_targets(&self) -> Targets {
        self.targets.select(&self.test)
    }

    /// Copy whose class labels are shuffled across samples.
    pub fn with_permuted_labels(&self, seed: u64) -> Self {
        let perm = permutation(self.len(), &mut seeded(seed));
        let mut out = self.clone();
        out.targets = self.targets.select(&perm);
        out
    }

    /// Per-class sample counts (classification only).
    pub fn class_counts(&self) -> Vec<usize> {
        match (&self.task_kind, &self.targets) {
            (TaskKind::Classification { classes }, Targets::Classes(c)) => {
                let mut counts = vec![0; *classes];
                c.iter().for_each(|&k| counts[k] += 1);
                counts
            }
            _ => Vec::new(),
        }
    }

    /// One row per sample: the features, then the label (or the target
    /// values for regression) in the last column(s).
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x{i}"))
            .chain(match &self.targets {
                Targets::Classes(_) => vec!["label".to_string()],
                Targets::Values(v) => (0..v.cols()).map(|j| format!("y{j}")).collect(),
            })
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for r in 0..self.len() {
            let mut fields: Vec<String> = self.inputs.row(r).iter().map(|v| v.to_string()).collect();
            match &self.targets {
                Targets::Classes(c) => fields.push(c[r].to_string()),
                Targets::Values(v) => fields.extend(v.row(r).iter().map(|x| x.to_string())),
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Subset of rows as a new dataset whose split puts everything in test.
    pub fn subset_as_test(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select(rows),
            task_kind: self.task_kind,
            train: Vec::new(),
            test: (0..rows.len()).collect(),
            seed: self.seed,
        }
    }
}

/// Reads a classification CSV written by [`LabeledDataset::write_csv`].
/// Every row lands in the test split.
pub fn read_classification_csv(input: impl BufRead, classes: usize) -> Result<LabeledDataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty dataset CSV".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"label") || cols.len() < 2 {
        return Err(Error::InvalidArgument("dataset CSV must end with a `label` column".into()));
    }
    let n = cols.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(shape_err("dataset CSV row", n + 1, fields.len()));
        }
        for f in &fields[..n] {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("row {}: {e}", i + 1)))?,
            );
        }
        let label: usize = fields[n]
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("row {} label: {e}", i + 1)))?;
        if label >= classes {
            return Err(Error::TargetMismatch(format!("label {label} >= {classes} classes")));
        }
        labels.push(label);
    }
    let rows = labels.len();
    Ok(LabeledDataset {
        inputs: DenseMatrix::new(rows, n, data)?,
        targets: Targets::Classes(labels),
        task_kind: TaskKind::Classification { classes },
        train: Vec::new(),
        test: (0..rows).collect(),
        seed: 0,
    })
}

/// `K = U₀ · diag(σ) · V₀ᵀ` (m × n) with seeded orthonormal factors and
/// singular values log-spaced from 3 down to 1.
pub fn gen_linear_task(n: usize, m: usize, r: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("task dimensions must be positive".into()));
    }
    if r > m.min(n) {
        return Err(Error::BadRank { rank: r, max: m.min(n) });
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(m, n));
    }
    let mut rng = seeded(seed);
    let u0 = orthonormal_columns(m, r, &mut rng);
    let v0 = orthonormal_columns(n, r, &mut rng);
    let sigma = log_spaced_singular_values(r);
    let mut us = u0;
    for i in 0..m {
        for (x, s) in us.row_mut(i).iter_mut().zip(&sigma) {
            *x *= s;
        }
    }
    us.matmul_transb(&v0)
}

/// `r` values log-spaced from 3 down to 1 (just `[3]` when `r = 1`).
pub fn log_spaced_singular_values(r: usize) -> Vec<f64> {
    if r == 1 {
        return vec![3.0];
    }
    (0..r)
        .map(|i| 3f64.powf(1.0 - i as f64 / (r - 1) as f64))
        .collect()
}

/// Regression data `y = K x` with standard Gaussian inputs.
pub fn gen_linear_regression(k: &DenseMatrix, samples: usize, seed: u64) -> Result<LabeledDataset> {
    let xs = gaussian_matrix(samples, k.cols(), &mut seeded(seed));
    let ys = xs.matmul_transb(k)?;
    LabeledDataset::with_split(xs, Targets::Values(ys), TaskKind::Regression { outputs: k.rows() }, seed)
}

/// `classes` unit-covariance Gaussian clusters in `R^n` whose centres are
/// pairwise at least `separation` apart. Labels cycle through the classes,
/// so counts are balanced to within one sample.
pub fn gen_cluster_classification(
    n: usize,
    classes: usize,
    samples: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument("separation must be > 0".into()));
    }
    if n == 0 || samples < classes.max(2) {
        return Err(Error::InvalidArgument("need n >= 1 and at least one sample per class".into()));
    }
    let mut rng = seeded(seed);
    let centers = cluster_centers(n, classes, separation, &mut rng);
    let mut data = Vec::with_capacity(samples * n);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let label = i % classes;
        labels.push(label);
        for j in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            data.push(centers.get(label, j) + noise);
        }
    }
    LabeledDataset::with_split(
        DenseMatrix::new(samples, n, data)?,
        Targets::Classes(labels),
        TaskKind::Classification { classes },
        seed,
    )
}

/// One centre per row.
fn cluster_centers(n: usize, classes: usize, separation: f64, rng: &mut impl Rng) -> DenseMatrix {
    if classes <= n {
        // Orthonormal directions scaled by s/√2 are exactly s apart.
        let q = orthonormal_columns(n, classes, rng);
        return q.transpose().scale(separation / std::f64::consts::SQRT_2);
    }
    loop {
        let dirs = gaussian_matrix(classes, n, rng);
        let mut unit = dirs.clone();
        for r in 0..classes {
            let norm = dirs.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            unit.row_mut(r).iter_mut().for_each(|v| *v /= norm);
        }
        let mut min_dist = f64::INFINITY;
        for a in 0..classes {
            for b in a + 1..classes {
                let d: f64 = unit.row(a).iter().zip(unit.row(b)).map(|(x, y)| (x - y).powi(2)).sum();
                min_dist = min_dist.min(d.sqrt());
            }
        }
        if min_dist > 1e-6 {
            return unit.scale(separation / min_dist);
        }
    }
}

pub const TIMESERIES_CHANNELS: usize = 4;
pub const CHANNEL_LIGHT: usize = 0;
pub const CHANNEL_TEMPERATURE: usize = 1;
pub const CHANNEL_PRESSURE: usize = 2;
pub const CHANNEL_HUMIDITY: usize = 3;

pub const CLASS_TAMPER: usize = 0;
pub const CLASS_SPIKE: usize = 1;
pub const CLASS_NORMAL: usize = 2;

pub const TAMPER_PERIOD: f64 = 4.0;
pub const TAMPER_AMPLITUDE: f64 = 3.0;
pub const SPIKE_HEIGHT: f64 = 5.0;
/// Largest total drift across one window.
pub const MAX_DRIFT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesWindowSpec {
    pub window: usize,
    pub noise: f64,
    pub seed: u64,
}

impl TimeseriesWindowSpec {
    pub fn input_dim(&self) -> usize {
        TIMESERIES_CHANNELS * self.window
    }

    /// Steps the temperature spike takes to reach full height.
    pub fn ramp_len(&self) -> usize {
        (self.window / 4).max(1)
    }
}

/// Sensor windows flattened channel-major: feature `c · w + t` is channel
/// `c` at time `t`. Class 0 adds a period-4 oscillation to light and
/// humidity, class 1 a ramp-and-hold on temperature, class 2 only the
/// shared baseline (random level plus slow linear drift).
pub fn gen_timeseries_windows(spec: &TimeseriesWindowSpec, samples: usize) -> Result<LabeledDataset> {
    if samples < 3 {
        return Err(Error::InvalidArgument("need at least 3 windows".into()));
    }
    if spec.window < 2 {
        return Err(Error::InvalidArgument("window length must be >= 2".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidArgument("noise scale must be >= 0".into()));
    }
    let w = spec.window;
    let n = spec.input_dim();
    let ramp = spec.ramp_len();
    let mut rng = seeded(spec.seed);
    let mut data = vec![0.0; samples * n];
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % 3;
        labels.push(class);
        let row = &mut data[i * n..(i + 1) * n];
        for c in 0..TIMESERIES_CHANNELS {
            let level: f64 = rng.random_range(-1.0..1.0);
            let drift: f64 = rng.random_range(-MAX_DRIFT..MAX_DRIFT);
            for t in 0..w {
                row[c * w + t] = level + drift * t as f64 / (w - 1) as f64;
            }
        }
        match class {
            CLASS_TAMPER => {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                for c in [CHANNEL_LIGHT, CHANNEL_HUMIDITY] {
                    for t in 0..w {
                        let angle = std::f64::consts::TAU * t as f64 / TAMPER_PERIOD + phase;
                        row[c * w + t] += TAMPER_AMPLITUDE * angle.sin();
                    }
                }
            }
            CLASS_SPIKE => {
                // At least one pre-spike step, so a spike is never a pure level shift.
                let onset = rng.random_range(1..=w - ramp);
                for t in onset..w {
                    let frac = ((t - onset + 1) as f64 / ramp as f64).min(1.0);
                    row[CHANNEL_TEMPERATURE * w + t] += SPIKE_HEIGHT * frac;
                }
            }
            _ => {}
        }
        if spec.noise > 0.0 {
            for v in row.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += spec.noise * e;
            }
        }
    }
    LabeledDataset::with_split(
        DenseMatrix::new(samples, n, data)?,
        Targets::Classes(labels),
        TaskKind::Classification { classes: 3 },
        spec.seed,
    )
}

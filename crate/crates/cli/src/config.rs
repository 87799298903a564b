//! Experiment configuration files (TOML). Unknown keys are rejected and
//! every run writes the fully-resolved document next to its outputs.

use std::path::{Path, PathBuf};

use codesign_core::codesign::{PretrainConfig, SweepConfig, TrainConfig};
use codesign_core::data::{
    gen_cluster_classification, gen_linear_regression, gen_linear_task, gen_timeseries_windows, LabeledDataset,
    TimeseriesWindowSpec,
};
use codesign_core::nn::Mlp;
use codesign_core::random::derive_seed;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Data source for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Cluster {
        n: usize,
        classes: usize,
        samples: usize,
        separation: f64,
    },
    Timeseries {
        window: usize,
        noise: f64,
        samples: usize,
    },
    /// Regression onto `y = K x` with a rank-controlled `K` (m × n). The
    /// task model is the single linear layer `K`.
    Linear {
        n: usize,
        m: usize,
        r: usize,
        samples: usize,
    },
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::Cluster {
            n: 16,
            classes: 4,
            samples: 4000,
            separation: 6.0,
        }
    }
}

impl TaskSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            TaskSpec::Cluster { n, .. } | TaskSpec::Linear { n, .. } => n,
            TaskSpec::Timeseries { window, .. } => 4 * window,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<LabeledDataset, CliError> {
        let data = match *self {
            TaskSpec::Cluster {
                n,
                classes,
                samples,
                separation,
            } => gen_cluster_classification(n, classes, samples, separation, seed)?,
            TaskSpec::Timeseries { window, noise, samples } => {
                gen_timeseries_windows(&TimeseriesWindowSpec { window, noise, seed }, samples)?
            }
            TaskSpec::Linear { n, m, r, samples } => {
                let k = gen_linear_task(n, m, r, seed)?;
                gen_linear_regression(&k, samples, derive_seed(seed, 1))?
            }
        };
        Ok(data)
    }

    /// Pre-trained, frozen task model for this task.
    pub fn task_net(&self, data: &LabeledDataset, pretrain: &PretrainConfig, seed: u64) -> Result<Mlp, CliError> {
        match *self {
            TaskSpec::Linear { n, m, r, .. } => {
                let k = gen_linear_task(n, m, r, seed)?;
                Ok(codesign_core::codesign::linear_task_net(&k)?)
            }
            _ => Ok(codesign_core::codesign::pretrain_task_net(
                data,
                &PretrainConfig {
                    seed,
                    ..pretrain.clone()
                },
            )?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seeds data generation, task-model pretraining and co-design training.
    pub seed: u64,
    pub out: PathBuf,
    pub task: TaskSpec,
    pub task_net: PretrainConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/experiment"),
            task: TaskSpec::default(),
            task_net: PretrainConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies command-line overrides and makes the seed the single source
    /// of randomness for every stage.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.task_net.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serialisable")
    }
}

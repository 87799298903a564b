use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Task loss plus λ-weighted reconstruction, task frozen.
    #[serde(rename = "tasknet")]
    TaskNet,
    /// Task loss only (λ = 0), task frozen.
    FullyTaskAware,
    /// Reconstruction only; decoded input is fed to the frozen task.
    TaskAgnostic,
    /// Same objective as `TaskNet` with the task parameters trainable.
    EndToEnd,
    /// Raw input into the task, no bottleneck. Reference rows only.
    Uncompressed,
    /// Closed-form linear factorisation. Reference rows only.
    ClosedForm,
}

impl Scheme {
    pub const TRAINABLE: [Scheme; 4] = [
        Scheme::TaskNet,
        Scheme::FullyTaskAware,
        Scheme::TaskAgnostic,
        Scheme::EndToEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::TaskNet => "tasknet",
            Scheme::FullyTaskAware => "fully_task_aware",
            Scheme::TaskAgnostic => "task_agnostic",
            Scheme::EndToEnd => "end_to_end",
            Scheme::Uncompressed => "uncompressed",
            Scheme::ClosedForm => "closed_form",
        }
    }

    pub fn is_trainable(self) -> bool {
        Self::TRAINABLE.contains(&self)
    }

    /// Whether the task parameters stay frozen during training.
    pub fn freezes_task(self) -> bool {
        self != Scheme::EndToEnd
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Scheme::TaskNet,
            Scheme::FullyTaskAware,
            Scheme::TaskAgnostic,
            Scheme::EndToEnd,
            Scheme::Uncompressed,
            Scheme::ClosedForm,
        ]
        .into_iter()
        .find(|sc| sc.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// What the task loss compares the prediction on decoded input against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// The frozen task model's own output on the clean input (argmax class
    /// for classification, raw outputs for regression).
    #[default]
    TaskOutputs,
    /// The dataset's labels.
    DatasetLabels,
}

pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda: f64,
    pub z_dim: usize,
    pub scheme: Scheme,
    /// Evaluate on the test split every this many steps (and at the end).
    pub eval_interval: usize,
    /// Joint gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    /// Hidden width of encoder and decoder.
    pub hidden: usize,
    /// Single identity-activation layer for encoder and decoder.
    pub linear: bool,
    pub target_source: TargetSource,
    /// Variational encoder (mean and log-variance heads, reparameterised
    /// sampling, unit-Gaussian KL term). Only meaningful for `task_agnostic`.
    pub variational: bool,
    pub kl_weight: f64,
    /// Compute task metrics during evaluation. Never affects updates.
    pub log_task_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.05,
            batch_size: 64,
            seed: 0,
            lambda: 0.0,
            z_dim: 4,
            scheme: Scheme::TaskNet,
            eval_interval: 100,
            grad_clip: 10.0,
            hidden: 64,
            linear: false,
            target_source: TargetSource::TaskOutputs,
            variational: false,
            kl_weight: DEFAULT_KL_WEIGHT,
            log_task_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.z_dim == 0 {
            return bad("z_dim must be >= 1".into());
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden width must be >= 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        if !self.scheme.is_trainable() {
            return bad(format!("scheme `{}` cannot be trained", self.scheme));
        }
        if self.scheme == Scheme::FullyTaskAware && self.lambda != 0.0 {
            return bad(format!("fully_task_aware requires lambda = 0, got {}", self.lambda));
        }
        if self.variational && self.scheme != Scheme::TaskAgnostic {
            return bad("the variational encoder is only available for task_agnostic".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("grad_clip {} must be >= 0", self.grad_clip));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight must be >= 0".into());
        }
        Ok(())
    }
}

//! Encoder/decoder co-design against a pre-trained task model.

mod config;
mod metrics;
mod model;
mod sweep;
mod train;

pub use config::{Scheme, TargetSource, TrainConfig, DEFAULT_KL_WEIGHT};
pub use metrics::{fmt_f64, metrics_csv_string, smallest_z_within, write_metrics_csv, MetricsRow, METRICS_HEADER};
pub use model::{
    CodesignModel, ParameterSplit, RobotSide, ServerSide, DECODER_FILE, ENCODER_FILE, MANIFEST_FILE, TASK_FILE,
};
pub use sweep::{sweep_bottleneck, sweep_cells, CellFailure, CellOutcome, SweepCell, SweepConfig, SweepTable};
pub use train::{
    eval_uncompressed, linear_task_net, pretrain_task_net, train_codesign, train_split_codesign,
    train_task_agnostic, PretrainConfig, DIVERGENCE_LIMIT,
};

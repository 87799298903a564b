//! Command-line harness for the co-design experiments.

pub mod config;
pub mod error;
pub mod experiment;
pub mod linear;
pub mod output;
pub mod plots;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use codesign_core::codesign::{fmt_f64, metrics_csv_string, CodesignModel, Scheme};
use codesign_core::data::TaskKind;
use codesign_core::nn::argmax_rows;
use codesign_wire::{send_dataset, serve_decoder_limited, Dtype};
use serde::Serialize;

pub use config::{ExperimentConfig, TaskSpec};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "codesign", version, about = "Task-aware bottleneck co-design experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and gradient-descent linear co-design over a Z grid.
    Linear(LinearArgs),
    /// Train one co-design model from a config file.
    Train(TrainArgs),
    /// Train every (scheme, Z, λ) cell of the configured grid.
    Sweep(SweepArgs),
    /// Serve the decoder and task model of a trained bundle over TCP.
    Serve(ServeArgs),
    /// Encode inputs with a trained bundle and send the codes to a server.
    Send(SendArgs),
    /// Turn a metrics CSV into plot-ready series files.
    ExportPlots(ExportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML experiment configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        Ok(cfg.resolve(self.seed, self.out.clone()))
    }
}

#[derive(Debug, Args)]
pub struct LinearArgs {
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// `a..b` or a comma-separated list.
    #[arg(long, default_value = "1..6")]
    pub z: String,
    #[arg(long, default_value = "0")]
    pub lambda: String,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "runs/linear")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model directory written by `train` (or a sweep cell).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7070")]
    pub addr: String,
    /// Exit after the first connection closes.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["config", "data"])))]
pub struct SendArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7070")]
    pub addr: String,
    /// Regenerate the test split of this experiment and send it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV whose `x*` columns are the inputs.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "f32")]
    pub dtype: DtypeArg,
    /// Send at most this many samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "runs/send")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command. Progress goes to `log`.
pub fn run(cli: Cli, log: &mut impl Write) -> Result<(), CliError> {
    match cli.command {
        Command::Linear(a) => cmd_linear(a, log),
        Command::Train(a) => cmd_train(a, log),
        Command::Sweep(a) => cmd_sweep(a, log),
        Command::Serve(a) => cmd_serve(a, log),
        Command::Send(a) => cmd_send(a, log),
        Command::ExportPlots(a) => cmd_export(a, log),
    }
}

#[derive(Serialize)]
struct LinearSummary<'a> {
    command: &'static str,
    generated_at: u64,
    params: &'a linear::LinearParams,
    rows: usize,
    failures: &'a [String],
}

fn cmd_linear(a: LinearArgs, log: &mut impl Write) -> Result<(), CliError> {
    let params = linear::LinearParams {
        n: a.n,
        m: a.m,
        r: a.r,
        z_grid: linear::parse_usize_grid(&a.z)?,
        lambda_grid: linear::parse_f64_grid(&a.lambda)?,
        steps: a.steps,
        learning_rate: a.lr,
        batch_size: a.batch,
        seed: a.seed,
        ..Default::default()
    };
    let outcome = linear::run_linear(&params)?;
    let series = plots::build_series(&outcome.rows)?;
    let summary = LinearSummary {
        command: "linear",
        generated_at: output::unix_now(),
        params: &params,
        rows: outcome.rows.len(),
        failures: &outcome.failures,
    };
    output::write_all(
        &a.out,
        &[
            (experiment::METRICS_FILE, metrics_csv_string(&outcome.rows).into_bytes()),
            (plots::LOSS_VS_Z_FILE, series.loss_vs_z.into_bytes()),
            (plots::LOSS_VS_LAMBDA_FILE, series.loss_vs_lambda.into_bytes()),
            (
                experiment::CONFIG_FILE,
                toml::to_string(&params).expect("parameters serialise").into_bytes(),
            ),
            (experiment::SUMMARY_FILE, output::json_bytes(&summary)),
        ],
    )?;
    let _ = writeln!(log, "wrote {} rows to {}", outcome.rows.len(), a.out.display());
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for f in &outcome.failures {
            let _ = writeln!(log, "failed: {f}");
        }
        Err(CliError::Experiment(format!("{} linear cell(s) failed", outcome.failures.len())))
    }
}

fn cmd_train(a: TrainArgs, log: &mut impl Write) -> Result<(), CliError> {
    let mut cfg = a.common.experiment()?;
    if let Some(s) = a.scheme {
        cfg.train.scheme = s;
    }
    if let Some(z) = a.z {
        cfg.train.z_dim = z;
    }
    if let Some(l) = a.lambda {
        cfg.train.lambda = l;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    let run = experiment::run_train(&cfg)?;
    let summary = experiment::write_train(&cfg, &run)?;
    let last = run.trace.last().expect("training always records a final row");
    let _ = writeln!(
        log,
        "{} z={} lambda={}: task_loss={} accuracy={} (baseline {}); wrote {}",
        last.scheme,
        last.z_dim,
        last.lambda,
        last.task_loss,
        last.accuracy.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()),
        summary.baseline.accuracy.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs, log: &mut impl Write) -> Result<(), CliError> {
    let mut cfg = a.common.experiment()?;
    if let Some(w) = a.workers {
        cfg.sweep.workers = w;
    }
    let run = experiment::run_sweep(&cfg)?;
    let summary = experiment::write_sweep(&cfg, &run)?;
    for f in &run.table.failures {
        let _ = writeln!(
            log,
            "failed: {} z={} lambda={}: {}",
            f.cell.scheme,
            f.cell.z_dim,
            fmt_f64(f.cell.lambda),
            f.error
        );
    }
    for s in &summary.smallest_z {
        let z = s.z_dim.map(|z| z.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(log, "{} lambda={}: smallest z within tolerance = {z}", s.scheme, fmt_f64(s.lambda));
    }
    let _ = writeln!(log, "wrote {}", cfg.out.display());
    if run.table.cells.is_empty() {
        return Err(CliError::Experiment("every sweep cell failed".into()));
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs, log: &mut impl Write) -> Result<(), CliError> {
    let model = CodesignModel::load(&a.model)?;
    let handle = serve_decoder_limited(model.server_side()?, a.addr.as_str(), a.once.then_some(1))?;
    let addr: SocketAddr = handle.local_addr();
    let _ = writeln!(log, "listening on {addr}");
    let _ = log.flush();
    handle.wait();
    Ok(())
}

#[derive(Serialize)]
struct BandwidthSummary {
    samples_sent: usize,
    input_dim: usize,
    z_dim: usize,
    dtype: &'static str,
    raw_bytes_per_sample: usize,
    compressed_bytes_per_sample: usize,
    total_compressed_bytes: usize,
    compression_ratio: f64,
    accuracy: Option<f64>,
}

fn cmd_send(a: SendArgs, log: &mut impl Write) -> Result<(), CliError> {
    let model = CodesignModel::load(&a.model)?;
    let robot = model.robot_side()?;
    let (mut inputs, labels) = match (&a.config, &a.data) {
        (Some(path), _) => {
            let cfg = ExperimentConfig::load(path)?.resolve(a.seed, None);
            let data = cfg.task.generate(cfg.seed)?;
            let labels = match (data.task_kind, data.test_targets()) {
                (TaskKind::Classification { .. }, codesign_core::nn::Targets::Classes(c)) => Some(c),
                _ => None,
            };
            (data.test_inputs(), labels)
        }
        (None, Some(path)) => (experiment::read_feature_csv(path)?, None),
        (None, None) => return Err(CliError::Usage("one of --config or --data is required".into())),
    };
    if inputs.cols() != robot.input_dim() {
        return Err(CliError::Usage(format!(
            "inputs have {} features, model expects {}",
            inputs.cols(),
            robot.input_dim()
        )));
    }
    let mut labels = labels;
    if let Some(limit) = a.limit {
        if limit < inputs.rows() {
            let rows: Vec<usize> = (0..limit).collect();
            inputs = inputs.select_rows(&rows);
            labels = labels.map(|l| l[..limit].to_vec());
        }
    }
    let dtype: Dtype = a.dtype.into();
    let (pred, report) = send_dataset(&robot, a.addr.as_str(), &inputs, dtype)?;

    let classes = if labels.is_some() { Some(argmax_rows(&pred)) } else { None };
    let accuracy = match (&labels, &classes) {
        (Some(l), Some(c)) if !l.is_empty() => {
            Some(l.iter().zip(c).filter(|(a, b)| a == b).count() as f64 / l.len() as f64)
        }
        _ => None,
    };
    let mut csv = (0..pred.cols()).map(|j| format!("y{j}")).collect::<Vec<_>>();
    if classes.is_some() {
        csv.push("class".into());
    }
    let mut text = csv.join(",") + "\n";
    for r in 0..pred.rows() {
        let mut fields: Vec<String> = pred.row(r).iter().map(|v| v.to_string()).collect();
        if let Some(c) = &classes {
            fields.push(c[r].to_string());
        }
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    let bw = BandwidthSummary {
        samples_sent: report.samples_sent,
        input_dim: robot.input_dim(),
        z_dim: robot.z_dim,
        dtype: match dtype {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        },
        raw_bytes_per_sample: report.raw_bytes_per_sample,
        compressed_bytes_per_sample: report.compressed_bytes_per_sample,
        total_compressed_bytes: report.total_compressed_bytes(),
        compression_ratio: report.ratio,
        accuracy,
    };
    output::write_all(
        &a.out,
        &[
            ("predictions.csv", text.into_bytes()),
            ("bandwidth.json", output::json_bytes(&bw)),
        ],
    )?;
    let _ = writeln!(
        log,
        "sent {} samples, {} bytes each ({}x smaller than raw f32); wrote {}",
        report.samples_sent,
        report.compressed_bytes_per_sample,
        report.ratio,
        a.out.display()
    );
    Ok(())
}

fn cmd_export(a: ExportArgs, log: &mut impl Write) -> Result<(), CliError> {
    let text = read_metrics(&a.metrics)?;
    let rows = plots::parse_metrics_csv(&text)?;
    let series = plots::build_series(&rows)?;
    output::write_all(
        &a.out,
        &[
            (plots::LOSS_VS_Z_FILE, series.loss_vs_z.into_bytes()),
            (plots::LOSS_VS_LAMBDA_FILE, series.loss_vs_lambda.into_bytes()),
        ],
    )?;
    let _ = writeln!(log, "wrote plot series to {}", a.out.display());
    Ok(())
}

fn read_metrics(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

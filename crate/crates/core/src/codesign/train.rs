//! Encoder/decoder training against a frozen task model.
//!
//! Each step samples a mini-batch from the training split, encodes,
//! decodes, runs the task model on the decoded input, and backpropagates
//! `L_task + λ · L_recon` into the encoder and decoder. The task gradient
//! flows through the frozen task model to reach the decoder; the task
//! parameters themselves only move under `end_to_end`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{Scheme, TargetSource, TrainConfig};
use super::metrics::MetricsRow;
use super::model::CodesignModel;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{
    apply_grads, argmax_rows, backward, backward_from_output, clip_grad_norm, forward, split_at, Activation,
    DenseLayer, LayerGrads, LossKind, Mlp, Targets,
};
use crate::random::{derive_seed, seeded, SeededRng};

/// Losses above this (or non-finite) abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            steps: 3000,
            learning_rate: 0.05,
            batch_size: 64,
            seed: 0,
        }
    }
}

fn loss_kind(data: &LabeledDataset) -> LossKind {
    if data.is_classification() {
        LossKind::SoftmaxCrossEntropy
    } else {
        LossKind::MeanSquaredError
    }
}

fn sample_indices(rng: &mut SeededRng, len: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

/// Trains a task model on the dataset labels and returns it fully frozen.
pub fn pretrain_task_net(data: &LabeledDataset, cfg: &PretrainConfig) -> Result<Mlp> {
    if cfg.steps == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("pretraining needs steps, batch_size and learning_rate > 0".into()));
    }
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    let mut dims = vec![data.input_dim()];
    dims.extend(&cfg.hidden);
    dims.push(data.output_dim());
    let mut net = Mlp::random(
        &dims,
        cfg.activation,
        Activation::Identity,
        &mut seeded(derive_seed(cfg.seed, STREAM_INIT)),
    )?;
    let xs = data.train_inputs();
    let ys = data.train_targets();
    let loss = loss_kind(data);
    let mut rng = seeded(derive_seed(cfg.seed, STREAM_BATCH));
    for step in 0..cfg.steps {
        let idx = sample_indices(&mut rng, xs.rows(), cfg.batch_size);
        let (_, tape) = forward(&net, &xs.select_rows(&idx))?;
        let (value, mut grads) = backward(&net, tape, loss, &ys.select(&idx))?;
        if !value.is_finite() || value > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss: value });
        }
        clip_grad_norm(&mut grads, 10.0);
        net = apply_grads(&net, &grads, cfg.learning_rate)?;
    }
    Ok(net.freeze_all())
}

/// Frozen single-layer linear task model `y = K x`.
pub fn linear_task_net(k: &DenseMatrix) -> Result<Mlp> {
    let layer = DenseLayer::new(k.clone(), vec![0.0; k.rows()], Activation::Identity)?;
    Mlp::new(vec![layer], vec![true])
}

/// Targets for the task loss on the given rows.
fn task_targets(task_net: &Mlp, data: &LabeledDataset, rows: &[usize], source: TargetSource) -> Result<Targets> {
    match source {
        TargetSource::DatasetLabels => Ok(data.targets.select(rows)),
        TargetSource::TaskOutputs => {
            let out = task_net.predict(&data.inputs.select_rows(rows))?;
            Ok(if data.is_classification() {
                Targets::Classes(argmax_rows(&out))
            } else {
                Targets::Values(out)
            })
        }
    }
}

fn accuracy(outputs: &DenseMatrix, labels: &Targets) -> Option<f64> {
    match labels {
        Targets::Classes(c) => {
            let pred = argmax_rows(outputs);
            let hits = pred.iter().zip(c).filter(|(p, l)| p == l).count();
            Some(hits as f64 / c.len() as f64)
        }
        Targets::Values(_) => None,
    }
}

/// Task loss and accuracy of the task model on the raw test inputs.
pub fn eval_uncompressed(task_net: &Mlp, data: &LabeledDataset, source: TargetSource) -> Result<MetricsRow> {
    if data.test.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let xs = data.test_inputs();
    let out = task_net.predict(&xs)?;
    let targets = task_targets(task_net, data, &data.test, source)?;
    let (task_loss, _) = loss_kind(data).evaluate(&out, &targets)?;
    Ok(MetricsRow {
        scheme: Scheme::Uncompressed,
        z_dim: data.input_dim(),
        lambda: 0.0,
        step: 0,
        task_loss,
        recon_loss: 0.0,
        weighted_loss: task_loss,
        accuracy: accuracy(&out, &data.test_targets()),
        compression_ratio: 1.0,
    })
}

/// Runs the configured scheme on the full task model (no split).
pub fn train_codesign(task_net: &Mlp, data: &LabeledDataset, cfg: &TrainConfig) -> Result<(CodesignModel, Vec<MetricsRow>)> {
    run(task_net, None, data, cfg)
}

/// Reconstruction-only autoencoder; the decoded input goes through the
/// frozen task model for evaluation only.
pub fn train_task_agnostic(
    task_net: &Mlp,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(CodesignModel, Vec<MetricsRow>)> {
    let cfg = TrainConfig {
        scheme: Scheme::TaskAgnostic,
        ..cfg.clone()
    };
    run(task_net, None, data, &cfg)
}

/// Robot runs task layers `[0, b)`; the encoder/decoder pair compresses the
/// intermediate feature map; the server finishes with layers `[b, end)`.
pub fn train_split_codesign(
    task_net: &Mlp,
    b: usize,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(CodesignModel, Vec<MetricsRow>)> {
    split_at(task_net, b)?;
    run(task_net, Some(b), data, cfg)
}

struct Evaluator<'a> {
    data: &'a LabeledDataset,
    features: DenseMatrix,
    targets: Targets,
    labels: Targets,
    loss: LossKind,
    cfg: &'a TrainConfig,
}

impl Evaluator<'_> {
    fn row(&self, step: usize, encoder: &Mlp, decoder: &Mlp, task: &Mlp) -> Result<MetricsRow> {
        let z_full = encoder.predict(&self.features)?;
        let z = if self.cfg.variational {
            z_full.columns(0, self.cfg.z_dim)
        } else {
            z_full
        };
        let x_hat = decoder.predict(&z)?;
        let (recon_loss, _) = LossKind::MeanSquaredError.evaluate(&x_hat, &Targets::Values(self.features.clone()))?;
        let (task_loss, acc) = if self.cfg.log_task_loss {
            let out = task.predict(&x_hat)?;
            let (t, _) = self.loss.evaluate(&out, &self.targets)?;
            (t, accuracy(&out, &self.labels))
        } else {
            (f64::NAN, None)
        };
        let lambda = effective_lambda(self.cfg);
        Ok(MetricsRow {
            scheme: self.cfg.scheme,
            z_dim: self.cfg.z_dim,
            lambda,
            step,
            task_loss,
            recon_loss,
            weighted_loss: task_loss + lambda * recon_loss,
            accuracy: acc,
            compression_ratio: self.data.input_dim() as f64 / self.cfg.z_dim as f64,
        })
    }
}

/// λ as reported: the task-agnostic scheme puts no weight on its
/// reconstruction relative to a task term it never optimises.
fn effective_lambda(cfg: &TrainConfig) -> f64 {
    match cfg.scheme {
        Scheme::TaskAgnostic | Scheme::FullyTaskAware => 0.0,
        _ => cfg.lambda,
    }
}

fn build_codec(feature_dim: usize, cfg: &TrainConfig) -> Result<(Mlp, Mlp)> {
    let mut rng = seeded(derive_seed(cfg.seed, STREAM_INIT));
    let enc_out = if cfg.variational { 2 * cfg.z_dim } else { cfg.z_dim };
    if cfg.linear {
        let enc = Mlp::random(&[feature_dim, enc_out], Activation::Identity, Activation::Identity, &mut rng)?;
        let dec = Mlp::random(&[cfg.z_dim, feature_dim], Activation::Identity, Activation::Identity, &mut rng)?;
        Ok((enc, dec))
    } else {
        let enc = Mlp::random(&[feature_dim, cfg.hidden, enc_out], Activation::Tanh, Activation::Identity, &mut rng)?;
        let dec = Mlp::random(&[cfg.z_dim, cfg.hidden, feature_dim], Activation::Tanh, Activation::Identity, &mut rng)?;
        Ok((enc, dec))
    }
}

fn run(
    task_net: &Mlp,
    split: Option<usize>,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(CodesignModel, Vec<MetricsRow>)> {
    cfg.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::InvalidArgument("dataset needs non-empty train and test splits".into()));
    }
    if task_net.input_dim() != data.input_dim() || task_net.output_dim() != data.output_dim() {
        return Err(Error::Config(format!(
            "task model maps {} -> {}, dataset needs {} -> {}",
            task_net.input_dim(),
            task_net.output_dim(),
            data.input_dim(),
            data.output_dim()
        )));
    }

    let (head, tail) = match split {
        Some(b) => {
            let (h, t) = split_at(task_net, b)?;
            (Some(h.freeze_all()), t)
        }
        None => (None, task_net.clone()),
    };
    let mut server_task = if cfg.scheme.freezes_task() {
        tail.freeze_all()
    } else {
        tail.unfreeze_all()
    };
    let to_features = |x: DenseMatrix| -> Result<DenseMatrix> {
        match &head {
            Some(h) => h.predict(&x),
            None => Ok(x),
        }
    };

    let loss = loss_kind(data);
    // The original task model supplies targets even when end_to_end moves
    // the server copy.
    let train_features = to_features(data.train_inputs())?;
    let train_targets = task_targets(task_net, data, &data.train, cfg.target_source)?;
    let eval = Evaluator {
        data,
        features: to_features(data.test_inputs())?,
        targets: task_targets(task_net, data, &data.test, cfg.target_source)?,
        labels: data.test_targets(),
        loss,
        cfg,
    };

    let (mut encoder, mut decoder) = build_codec(train_features.cols(), cfg)?;
    let mut batch_rng = seeded(derive_seed(cfg.seed, STREAM_BATCH));
    let mut noise_rng = seeded(derive_seed(cfg.seed, STREAM_NOISE));
    let trains_task = cfg.scheme != Scheme::TaskAgnostic;
    let lambda = effective_lambda(cfg);
    let z = cfg.z_dim;

    let mut trace = Vec::new();
    for step in 1..=cfg.steps {
        let idx = sample_indices(&mut batch_rng, train_features.rows(), cfg.batch_size);
        let xb = train_features.select_rows(&idx);
        let bsz = xb.rows() as f64;

        let (enc_out, enc_tape) = forward(&encoder, &xb)?;
        // Reparameterised sample for the variational encoder.
        let (latent, vae) = if cfg.variational {
            let mu = enc_out.columns(0, z);
            let logvar = enc_out.columns(z, 2 * z);
            let eps = DenseMatrix::from_fn(xb.rows(), z, |_, _| noise_rng.sample(StandardNormal));
            let mut sample = mu.clone();
            for ((s, &lv), &e) in sample.as_mut_slice().iter_mut().zip(logvar.as_slice()).zip(eps.as_slice()) {
                *s += (0.5 * lv).exp() * e;
            }
            (sample, Some((mu, logvar, eps)))
        } else {
            (enc_out, None)
        };

        let (x_hat, dec_tape) = forward(&decoder, &latent)?;
        let (recon_loss, d_recon) = LossKind::MeanSquaredError.evaluate(&x_hat, &Targets::Values(xb.clone()))?;

        let mut objective;
        let mut d_xhat;
        let mut task_grads: Option<Vec<LayerGrads>> = None;
        if trains_task {
            let (y_hat, task_tape) = forward(&server_task, &x_hat)?;
            let (task_loss, d_y) = loss.evaluate(&y_hat, &train_targets.select(&idx))?;
            let (tg, d_task_in) = backward_from_output(&server_task, task_tape, &d_y)?;
            task_grads = Some(tg);
            objective = task_loss + lambda * recon_loss;
            d_xhat = d_task_in;
            d_xhat.axpy(lambda, &d_recon)?;
        } else {
            objective = recon_loss;
            d_xhat = d_recon;
        }

        let (mut dec_grads, d_latent) = backward_from_output(&decoder, dec_tape, &d_xhat)?;
        let d_enc_out = match vae {
            Some((mu, logvar, eps)) => {
                let w = cfg.kl_weight;
                let mut kl = 0.0;
                let mut d = DenseMatrix::zeros(xb.rows(), 2 * z);
                for r in 0..xb.rows() {
                    for j in 0..z {
                        let m = mu.get(r, j);
                        let lv = logvar.get(r, j);
                        let e = eps.get(r, j);
                        let g = d_latent.get(r, j);
                        kl += -0.5 * (1.0 + lv - m * m - lv.exp());
                        d.set(r, j, g + w * m / bsz);
                        d.set(r, z + j, g * e * 0.5 * (0.5 * lv).exp() + w * 0.5 * (lv.exp() - 1.0) / bsz);
                    }
                }
                objective += w * kl / bsz;
                d
            }
            None => d_latent,
        };
        let (mut enc_grads, _) = backward_from_output(&encoder, enc_tape, &d_enc_out)?;

        if !objective.is_finite() || objective > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss: objective });
        }

        let update_task = !cfg.scheme.freezes_task();
        if cfg.grad_clip > 0.0 {
            // One joint norm over everything that is about to move.
            let (n_enc, n_dec) = (enc_grads.len(), dec_grads.len());
            let mut all = std::mem::take(&mut enc_grads);
            all.append(&mut dec_grads);
            if update_task {
                all.extend(task_grads.take().unwrap_or_default());
            }
            clip_grad_norm(&mut all, cfg.grad_clip);
            let mut rest = all.split_off(n_enc);
            let task_rest = rest.split_off(n_dec);
            enc_grads = all;
            dec_grads = rest;
            if update_task {
                task_grads = Some(task_rest);
            }
        }

        encoder = apply_grads(&encoder, &enc_grads, cfg.learning_rate)?;
        decoder = apply_grads(&decoder, &dec_grads, cfg.learning_rate)?;
        if update_task {
            if let Some(tg) = &task_grads {
                server_task = apply_grads(&server_task, tg, cfg.learning_rate)?;
            }
        }

        if step % cfg.eval_interval == 0 || step == cfg.steps {
            trace.push(eval.row(step, &encoder, &decoder, &server_task)?);
        }
    }

    let task = match head {
        Some(h) => h.chain(&server_task)?,
        None => server_task,
    };
    let model = CodesignModel::new(
        encoder,
        decoder,
        task,
        cfg.z_dim,
        lambda,
        cfg.scheme,
        split,
        cfg.variational,
    )?;
    Ok((model, trace))
}

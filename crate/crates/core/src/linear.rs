//! Linear encoder/decoder co-design against a fixed task matrix `K`.
//!
//! The robot sends `z = A x`, the server decodes `x̂ = B z` and applies `K`.
//! Losses are batch means of `‖K x − K B A x‖²` (task) and `‖x − B A x‖²`
//! (reconstruction), combined as `task + λ · recon`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::random::{derive_seed, gaussian_matrix, seeded, uniform_matrix};
use crate::svd::svd_compact;

/// Weighted-loss divergence threshold for gradient descent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCodesign {
    a: DenseMatrix,
    b: DenseMatrix,
    k: DenseMatrix,
    lambda: f64,
}

impl LinearCodesign {
    /// `a`: Z×n encoder, `b`: n×Z decoder, `k`: m×n task matrix.
    pub fn new(a: DenseMatrix, b: DenseMatrix, k: DenseMatrix, lambda: f64) -> Result<Self> {
        let n = k.cols();
        if a.cols() != n || b.rows() != n || a.rows() != b.cols() || a.rows() == 0 {
            return Err(shape_err(
                "LinearCodesign::new",
                format!("A: Z×{n}, B: {n}×Z with Z ≥ 1"),
                format!("A: {}×{}, B: {}×{}", a.rows(), a.cols(), b.rows(), b.cols()),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and >= 0")));
        }
        Ok(Self { a, b, k, lambda })
    }

    pub fn encoder(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn decoder(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn task(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn z_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.k.cols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and >= 0")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// `(alpha · A, B / alpha)`; the product `B A` is unchanged.
    pub fn rescaled(&self, alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidArgument("rescale factor must be finite and nonzero".into()));
        }
        Self::new(self.a.scale(alpha), self.b.scale(1.0 / alpha), self.k.clone(), self.lambda)
    }

    /// Batch-mean compression ratio `n / Z`.
    pub fn compression_ratio(&self) -> f64 {
        self.input_dim() as f64 / self.z_dim() as f64
    }

    fn check_batch(&self, xs: &DenseMatrix) -> Result<()> {
        if xs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if xs.cols() != self.input_dim() {
            return Err(shape_err("linear batch", format!("{} columns", self.input_dim()), xs.cols()));
        }
        Ok(())
    }

    /// Latents, reconstruction residuals `x − x̂`, task residuals `K(x − x̂)`.
    fn residuals(&self, xs: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
        self.check_batch(xs)?;
        let z = xs.matmul_transb(&self.a)?;
        let x_hat = z.matmul_transb(&self.b)?;
        let recon = xs.sub(&x_hat)?;
        let task = recon.matmul_transb(&self.k)?;
        Ok((z, recon, task))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub task_loss: f64,
    pub recon_loss: f64,
    pub weighted: f64,
}

impl LossReport {
    pub fn new(task_loss: f64, recon_loss: f64, lambda: f64) -> Self {
        Self {
            task_loss,
            recon_loss,
            weighted: task_loss + lambda * recon_loss,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Batch means of the task, reconstruction and weighted losses.
/// `xs` holds one sample per row.
pub fn eval_linear_loss(model: &LinearCodesign, xs: &DenseMatrix) -> Result<LossReport> {
    let (_, recon, task) = model.residuals(xs)?;
    Ok(LossReport::new(
        mean(&task.row_norms_sq()),
        mean(&recon.row_norms_sq()),
        model.lambda,
    ))
}

/// Closed-form task-aware factorisation from the compact SVD `K = U Σ Vᵀ`.
///
/// With `z_dim ≥ rank(K)` the encoder is `Vᵀ` (zero rows appended up to
/// `z_dim`) and the decoder its transpose, giving zero task loss for every
/// input. Below the rank, the top `z_dim` right singular directions are used.
pub fn solve_closed_form(k: &DenseMatrix, z_dim: usize) -> Result<LinearCodesign> {
    if z_dim == 0 {
        return Err(Error::InvalidArgument("bottleneck dimension must be >= 1".into()));
    }
    let svd = svd_compact(k, None)?;
    let vt = svd.truncate(z_dim).vt;
    let a = vt.zero_pad(z_dim, k.cols());
    let b = a.transpose();
    LinearCodesign::new(a, b, k.clone(), 0.0)
}

/// Batch-mean gradients of the weighted loss with respect to `A` and `B`:
///
/// ```text
/// ∇A = −2 Bᵀ Kᵀ (Kx − KBAx) xᵀ − 2λ Bᵀ (x − BAx) xᵀ
/// ∇B = −2 Kᵀ (Kx − KBAx) xᵀ Aᵀ − 2λ (x − BAx) xᵀ Aᵀ
/// ```
pub fn linear_gradients(model: &LinearCodesign, xs: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (z, recon, task) = model.residuals(xs)?;
    let scale = -2.0 / xs.rows() as f64;
    // Row i of `e` is (Kᵀ t_i + λ r_i)ᵀ.
    let mut e = task.matmul(&model.k)?;
    e.axpy(model.lambda, &recon)?;
    let grad_a = e.matmul(&model.b)?.transa_matmul(xs)?.scale(scale);
    let grad_b = e.transa_matmul(&z)?.scale(scale);
    Ok((grad_a, grad_b))
}

/// Which loss the linear descent minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearObjective {
    /// `task + λ · recon`.
    Weighted,
    /// Reconstruction only; `K` is ignored by the updates but still used for
    /// reporting.
    ReconstructionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: LinearObjective,
    /// Draw a fresh Gaussian batch every step instead of descending on one
    /// fixed batch.
    pub resample: bool,
    pub init_scale: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            learning_rate: 0.01,
            batch_size: 256,
            seed: 0,
            objective: LinearObjective::Weighted,
            resample: false,
            init_scale: 0.1,
        }
    }
}

/// Fixed-step gradient descent on `(A, B)` with `K` frozen. Inputs are
/// standard Gaussian. The trace holds the loss on the training batch after
/// each update.
pub fn descend_linear(
    k: &DenseMatrix,
    z_dim: usize,
    lambda: f64,
    cfg: &DescentConfig,
) -> Result<(LinearCodesign, Vec<LossReport>)> {
    if cfg.steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config("learning_rate must be > 0".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if z_dim == 0 {
        return Err(Error::Config("z_dim must be >= 1".into()));
    }
    let n = k.cols();
    let mut init_rng = seeded(derive_seed(cfg.seed, 0));
    let a = uniform_matrix(z_dim, n, cfg.init_scale, &mut init_rng);
    let b = uniform_matrix(n, z_dim, cfg.init_scale, &mut init_rng);
    let mut model = LinearCodesign::new(a, b, k.clone(), lambda)?;

    // The surrogate drops the task term by zeroing K and weighting recon by 1.
    let surrogate_k = DenseMatrix::zeros(k.rows(), k.cols());
    let mut data_rng = seeded(derive_seed(cfg.seed, 1));
    let mut xs = gaussian_matrix(cfg.batch_size, n, &mut data_rng);

    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cfg.resample && step > 0 {
            xs = gaussian_matrix(cfg.batch_size, n, &mut data_rng);
        }
        let (ga, gb) = match cfg.objective {
            LinearObjective::Weighted => linear_gradients(&model, &xs)?,
            LinearObjective::ReconstructionOnly => {
                let surrogate = LinearCodesign {
                    a: model.a.clone(),
                    b: model.b.clone(),
                    k: surrogate_k.clone(),
                    lambda: 1.0,
                };
                linear_gradients(&surrogate, &xs)?
            }
        };
        model.a.axpy(-cfg.learning_rate, &ga)?;
        model.b.axpy(-cfg.learning_rate, &gb)?;
        let report = eval_linear_loss(&model, &xs)?;
        if !report.weighted.is_finite() || report.weighted > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step,
                loss: report.weighted,
            });
        }
        trace.push(report);
    }
    Ok((model, trace))
}

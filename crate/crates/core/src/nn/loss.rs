use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over every element of `(output − target)²`.
    MeanSquaredError,
    /// Mean over samples of `−log softmax(logits)[class]`.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(DenseMatrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select_rows(indices)),
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Index of the largest entry of each row (first on ties).
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

impl LossKind {
    /// Mean loss and its gradient with respect to `outputs`.
    pub fn evaluate(self, outputs: &DenseMatrix, targets: &Targets) -> Result<(f64, DenseMatrix)> {
        let n = outputs.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if targets.len() != n {
            return Err(shape_err("loss targets", n, targets.len()));
        }
        match (self, targets) {
            (LossKind::MeanSquaredError, Targets::Values(t)) => {
                if t.shape() != outputs.shape() {
                    return Err(shape_err(
                        "mse targets",
                        format!("{:?}", outputs.shape()),
                        format!("{:?}", t.shape()),
                    ));
                }
                let count = (n * outputs.cols()) as f64;
                let diff = outputs.sub(t)?;
                let loss = diff.frobenius_sq() / count;
                Ok((loss, diff.scale(2.0 / count)))
            }
            (LossKind::SoftmaxCrossEntropy, Targets::Classes(classes)) => {
                let c = outputs.cols();
                if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
                    return Err(Error::TargetMismatch(format!("class {bad} out of range for {c} logits")));
                }
                let mut grad = softmax_rows(outputs);
                let mut loss = 0.0;
                for (r, &k) in classes.iter().enumerate() {
                    let row = outputs.row(r);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    loss += lse - row[k];
                    let g = grad.row_mut(r);
                    g[k] -= 1.0;
                    g.iter_mut().for_each(|v| *v /= n as f64);
                }
                Ok((loss / n as f64, grad))
            }
            (LossKind::MeanSquaredError, Targets::Classes(_)) => Err(Error::TargetMismatch(
                "mean squared error needs real-valued targets".into(),
            )),
            (LossKind::SoftmaxCrossEntropy, Targets::Values(_)) => Err(Error::TargetMismatch(
                "softmax cross-entropy needs class-index targets".into(),
            )),
        }
    }
}

//! Compact SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The columns of a working copy are rotated pairwise until they are
//! mutually orthogonal; their norms are the singular values and the
//! accumulated rotations form `V`.

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

pub const DEFAULT_MAX_SWEEPS: usize = 80;

/// `k = u · diag(sigma) · vt`, keeping only the singular values above the
/// rank tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
    pub rank: usize,
}

impl SvdResult {
    /// `V` (n × r), whose columns are the right singular vectors.
    pub fn v(&self) -> DenseMatrix {
        self.vt.transpose()
    }

    /// Keeps the leading `z` triplets (or all of them when `z >= rank`).
    pub fn truncate(&self, z: usize) -> SvdResult {
        let keep = z.min(self.rank);
        SvdResult {
            u: self.u.columns(0, keep),
            sigma: self.sigma[..keep].to_vec(),
            vt: self.vt.row_range(0, keep),
            rank: keep,
        }
    }

    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in us.row_mut(r).iter_mut().zip(&self.sigma) {
                *c *= s;
            }
        }
        us.matmul(&self.vt).expect("factor shapes chain")
    }
}

/// Default relative rank tolerance: machine epsilon times the larger dimension.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

/// Compact SVD retaining singular values `> rank_tol · σ₁`.
/// `rank_tol = None` selects [`default_rank_tol`].
pub fn svd_compact(k: &DenseMatrix, rank_tol: Option<f64>) -> Result<SvdResult> {
    svd_compact_with(k, rank_tol, DEFAULT_MAX_SWEEPS)
}

pub fn svd_compact_with(
    k: &DenseMatrix,
    rank_tol: Option<f64>,
    max_sweeps: usize,
) -> Result<SvdResult> {
    let (m, n) = k.shape();
    if !k.is_finite() {
        let index = k.as_slice().iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { index });
    }
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(m, n));
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument(format!("rank tolerance {tol} must be >= 0")));
    }

    // Rotate the columns of the taller orientation.
    let transposed = m < n;
    let work = if transposed { k.transpose() } else { k.clone() };
    let (cols, left, right) = jacobi_columns(&work, max_sweeps)?;

    let sigma1 = cols.first().map_or(0.0, |c| c.0);
    let keep: Vec<&(f64, usize)> = cols
        .iter()
        .filter(|(s, _)| sigma1 > 0.0 && *s > tol * sigma1)
        .collect();
    let r = keep.len();

    // left: columns of the rotated working matrix (length `work.rows()`),
    // right: accumulated rotations (length `work.cols()`).
    let wr = work.rows();
    let wc = work.cols();
    let mut lu = DenseMatrix::zeros(wr, r);
    let mut rv = DenseMatrix::zeros(wc, r);
    let mut sigma = Vec::with_capacity(r);
    for (j, &&(s, idx)) in keep.iter().enumerate() {
        sigma.push(s);
        for i in 0..wr {
            lu.set(i, j, left[idx][i] / s);
        }
        for i in 0..wc {
            rv.set(i, j, right[idx][i]);
        }
    }

    let (mut u, mut v) = if transposed { (rv, lu) } else { (lu, rv) };

    // Make the largest-magnitude entry of every right singular vector positive.
    for j in 0..r {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..v.rows() {
            let x = v.get(i, j);
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..v.rows() {
                v.set(i, j, -v.get(i, j));
            }
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }

    Ok(SvdResult {
        u,
        sigma,
        vt: v.transpose(),
        rank: r,
    })
}

/// Runs Jacobi sweeps on the columns of `a`. Returns `(sigma, index)` pairs
/// sorted by descending sigma, plus the rotated columns and the rotation
/// accumulator, both stored column-wise.
#[allow(clippy::type_complexity)]
fn jacobi_columns(
    a: &DenseMatrix,
    max_sweeps: usize,
) -> Result<(Vec<(f64, usize)>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64);

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::IterationLimit { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<(f64, usize)> = w.iter().enumerate().map(|(i, c)| (dot(c, c).sqrt(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok((order, w, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Number of singular values above `rank_tol · σ₁`; zero for the zero matrix.
pub fn numerical_rank(k: &DenseMatrix, rank_tol: Option<f64>) -> Result<usize> {
    Ok(svd_compact(k, rank_tol)?.rank)
}

//! Reference implementations used as test oracles. Each one is a different
//! algorithm from the code under test.
#![allow(dead_code)]

use codesign_core::DenseMatrix;

/// Rank by Gaussian elimination with partial pivoting. Pivots below
/// `tol · max|entry|` count as zero.
pub fn elimination_rank(m: &DenseMatrix, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..rows).map(|r| m.row(r).to_vec()).collect();
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let pivot = (rank..rows)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        if a[pivot][c].abs() <= tol * scale {
            continue;
        }
        a.swap(rank, pivot);
        for r in rank + 1..rows {
            let f = a[r][c] / a[rank][c];
            for k in c..cols {
                a[r][k] -= f * a[rank][k];
            }
        }
        rank += 1;
    }
    rank
}

/// Eigen-decomposition of a symmetric matrix by classical two-sided Jacobi
/// rotations. Returns eigenvalues in descending order and the matching
/// eigenvectors as columns.
pub fn symmetric_eigen(s: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| s.row(r).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - sn * vq;
                    row[q] = sn * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (values, vecs)
}

/// Mean over rows of `‖K x − K P x‖²`, with `P` the projector onto the
/// top-`z` eigenvectors of `KᵀK`.
pub fn truncated_task_loss(k: &DenseMatrix, z: usize, xs: &DenseMatrix) -> f64 {
    let (_, vecs) = symmetric_eigen(&k.transa_matmul(k).unwrap());
    let n = k.cols();
    let mut total = 0.0;
    for r in 0..xs.rows() {
        let x = xs.row(r);
        let mut px = vec![0.0; n];
        for c in 0..z.min(n) {
            let proj: f64 = (0..n).map(|i| vecs.get(i, c) * x[i]).sum();
            for i in 0..n {
                px[i] += proj * vecs.get(i, c);
            }
        }
        for row in 0..k.rows() {
            let d: f64 = (0..n).map(|i| k.get(row, i) * (x[i] - px[i])).sum();
            total += d * d;
        }
    }
    total / xs.rows() as f64
}

/// Central finite difference of `f` at every entry of `m`.
pub fn finite_difference(m: &DenseMatrix, h: f64, mut f: impl FnMut(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    let mut probe = m.clone();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let orig = m.get(r, c);
            probe.set(r, c, orig + h);
            let up = f(&probe);
            probe.set(r, c, orig - h);
            let down = f(&probe);
            probe.set(r, c, orig);
            out.set(r, c, (up - down) / (2.0 * h));
        }
    }
    out
}

/// Largest `|a − b|` relative to `max(floor, |a|, |b|)`.
pub fn max_rel_err(a: &DenseMatrix, b: &DenseMatrix, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / floor.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

//! Principal component analysis by block power (subspace) iteration.
//!
//! The covariance of the mean-centred rows is formed once (d x d, d <= 784
//! for MNIST), then a block of `p >= k` orthonormal vectors is repeatedly
//! multiplied by it. After every multiplication a Rayleigh–Ritz step rotates
//! the block onto the Ritz vectors of the projected p x p problem, which is
//! solved with cyclic Jacobi. Iteration stops when every one of the leading
//! `k` Ritz pairs has residual `||C v - lambda v|| <= 1e-9 * lambda_max`, or
//! after 1000 sweeps.

use log::warn;

use super::{axpy, dot_slices, norm, Matrix, RngStream};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 1000;
const TOLERANCE: f64 = 1e-9;
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Pca {
    /// `k x d`, orthonormal rows, ordered by decreasing eigenvalue.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance (sum of all eigenvalues).
    pub total_variance: f64,
    pub mean: Vec<f64>,
    /// Fewer components than requested because the covariance rank is lower.
    pub truncated: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl Pca {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues
            .iter()
            .map(|l| l / self.total_variance)
            .collect()
    }

    /// Projects one row: `components * (x - mean)`.
    pub fn transform_row(&self, x: &[f64], out: &mut [f64]) {
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (o, c) in out.iter_mut().zip(self.components.iter_rows()) {
            *o = dot_slices(c, &centred);
        }
    }

    pub fn transform(&self, rows: &Matrix) -> Result<Matrix> {
        crate::error::check_dim(self.mean.len(), rows.cols())?;
        let mut out = Matrix::zeros(rows.rows(), self.k());
        for i in 0..rows.rows() {
            let src = rows.row(i);
            self.transform_row(src, out.row_mut(i));
        }
        Ok(out)
    }
}

/// Top-`k` principal components of the rows of `rows`.
///
/// The starting block is drawn from `rng`, so the result is a deterministic
/// function of the data and the stream state.
pub fn pca_top_k(rows: &Matrix, k: usize, rng: &mut RngStream) -> Result<Pca> {
    let (n, d) = (rows.rows(), rows.cols());
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 rows"));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "PCA component count {k} must be in 1..={d}"
        )));
    }
    let mean = column_means(rows);
    let cov = covariance(rows, &mean);
    let total_variance: f64 = (0..d).map(|i| cov.get(i, i)).sum();

    let p = d.min((2 * k).max(k + 10));
    let mut basis = Matrix::zeros(p, d);
    for i in 0..p {
        for v in basis.row_mut(i) {
            *v = rng.standard_normal();
        }
    }
    orthonormalize(&mut basis);

    let mut ritz_values = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Z = C V (C symmetric, so rows of Z are C v_i).
        let mut image = Matrix::zeros(p, d);
        for i in 0..p {
            let v = basis.row(i);
            let z = image.row_mut(i);
            for (zj, crow) in z.iter_mut().zip(cov.iter_rows()) {
                *zj = dot_slices(crow, v);
            }
        }
        // Projected problem H = V C V^T.
        let mut h = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let hij = dot_slices(basis.row(i), image.row(j));
                h.set(i, j, hij);
                h.set(j, i, hij);
            }
        }
        let (values, vectors) = symmetric_eigen(&h);
        // Rotate both blocks onto the Ritz basis.
        let ritz = vectors.matmul(&basis)?;
        let ritz_image = vectors.matmul(&image)?;
        ritz_values.copy_from_slice(&values);

        let lambda_max = values[0].abs().max(f64::MIN_POSITIVE);
        let worst = (0..k)
            .map(|i| {
                let r: f64 = ritz_image
                    .row(i)
                    .iter()
                    .zip(ritz.row(i))
                    .map(|(cz, v)| (cz - values[i] * v).powi(2))
                    .sum();
                r.sqrt()
            })
            .fold(0.0, f64::max);
        basis = ritz;
        if worst <= TOLERANCE * lambda_max {
            converged = true;
            break;
        }
        // Power step on the Ritz basis.
        basis = ritz_image;
        orthonormalize(&mut basis);
    }
    if !converged {
        warn!("PCA did not reach tolerance {TOLERANCE} after {MAX_ITERATIONS} iterations");
    }

    let lambda_max = ritz_values[0].max(0.0);
    let rank = ritz_values
        .iter()
        .take(k)
        .take_while(|&&l| l > RANK_TOLERANCE * lambda_max.max(f64::MIN_POSITIVE) && l > 0.0)
        .count();
    let truncated = rank < k;
    if truncated {
        warn!("PCA requested {k} components but covariance rank is {rank}");
    }
    let mut components = Matrix::zeros(rank, d);
    for i in 0..rank {
        let row = components.row_mut(i);
        row.copy_from_slice(basis.row(i));
        fix_sign(row);
    }
    Ok(Pca {
        components,
        eigenvalues: ritz_values[..rank].to_vec(),
        total_variance,
        mean,
        truncated,
        converged,
        iterations,
    })
}

fn column_means(rows: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; rows.cols()];
    for r in rows.iter_rows() {
        axpy(1.0, r, &mut mean);
    }
    let n = rows.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Sample covariance (divisor n - 1) of the rows.
fn covariance(rows: &Matrix, mean: &[f64]) -> Matrix {
    let (n, d) = (rows.rows(), rows.cols());
    let zeros = rows.as_slice().iter().filter(|&&v| v == 0.0).count();
    let mut c = Matrix::zeros(d, d);
    if zeros * 2 > rows.as_slice().len() {
        // Mostly-zero data (MNIST pixels): accumulate the raw Gram matrix over
        // nonzero entries only, then subtract n * mean mean^T.
        let mut nz: Vec<(usize, f64)> = Vec::with_capacity(d);
        for r in rows.iter_rows() {
            nz.clear();
            nz.extend(r.iter().copied().enumerate().filter(|&(_, v)| v != 0.0));
            for (a, &(ja, xa)) in nz.iter().enumerate() {
                let crow = c.row_mut(ja);
                for &(jb, xb) in &nz[a..] {
                    crow[jb] += xa * xb;
                }
            }
        }
        let nf = n as f64;
        for i in 0..d {
            for j in i..d {
                let v = c.get(i, j) - nf * mean[i] * mean[j];
                c.set(i, j, v);
            }
        }
    } else {
        let mut centred = vec![0.0; d];
        for r in rows.iter_rows() {
            for ((x, m), o) in r.iter().zip(mean).zip(centred.iter_mut()) {
                *o = x - m;
            }
            for a in 0..d {
                let xa = centred[a];
                if xa != 0.0 {
                    axpy(xa, &centred[a..], &mut c.row_mut(a)[a..]);
                }
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = c.get(i, j) / denom;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    c
}

/// Modified Gram–Schmidt on the rows, applied twice for stability. Rows that
/// collapse to zero are replaced by the unit vector least represented so far.
fn orthonormalize(m: &mut Matrix) {
    let (p, d) = (m.rows(), m.cols());
    for _pass in 0..2 {
        for i in 0..p {
            for j in 0..i {
                let (head, tail) = m_split(m, j, i);
                let proj = dot_slices(head, tail);
                axpy(-proj, head, tail);
            }
            let nrm = norm(m.row(i));
            if nrm > 1e-300 {
                m.row_mut(i).iter_mut().for_each(|v| *v /= nrm);
            } else {
                let row = m.row_mut(i);
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i % d] = 1.0;
            }
        }
    }
}

/// Borrow row `j` immutably and row `i` mutably (j < i).
fn m_split(m: &mut Matrix, j: usize, i: usize) -> (&[f64], &mut [f64]) {
    let d = m.cols();
    let (head, tail) = m.as_mut_slice().split_at_mut(i * d);
    (&head[j * d..(j + 1) * d], &mut tail[..d])
}

fn fix_sign(v: &mut [f64]) {
    let (mut best, mut idx) = (0.0, 0);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v.get(idx).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in decreasing order and the matching unit
/// eigenvectors as the rows of the returned matrix.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        let diag: f64 = (0..n).map(|i| m.get(i, i).powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                // Eigenvectors are the columns of the accumulated rotation.
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(r, k, v.get(k, i));
        }
    }
    (values, vectors)
}
